"""Optical and microwave transitions between the spin levels.

Optical dipole operators act on the product spin space:

* ``E || c``: ``2 I_z``.  Diagonal in the product basis, so it preserves both
  electron and nuclear spin projections; with both manifolds' ``A_perp``
  taken non-negative it connects the antisymmetric/symmetric hyperfine
  superpositions across manifolds in the order the zero-field spectrum
  requires (transition A = ``|4>g-|1>e`` lies 0.675 GHz below B = ``|3>g-|1>e``).
* ``E perp c``: ``2 S_x``.

Both have unit operator norm, so relative amplitudes are bounded by 1.

Letter labels are attached to ``(ground, excited)`` level-index pairs (1-based):

====  =======  ====  =======  ====  =======
A     (4, 1)   C1    (1, 1)   G3    (4, 3)
B     (3, 1)   C2    (2, 1)   G4    (4, 4)
D     (4, 2)   F1    (1, 2)   H3    (3, 3)
E     (3, 2)   F2    (2, 2)   H4    (3, 4)
I     (1, 3)   I     (2, 4)
====  =======  ====  =======  ====  =======

The pairs ``(1, 4)`` and ``(2, 3)`` carry no label; they are dark for fields
along c.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .constants import MU_B_GHZ_PER_T
from .io import format_float, write_csv
from .spin import (
    EXCITED,
    GROUND,
    IZ,
    SX,
    SZ,
    FieldVector,
    LevelSolution,
    ModelParams,
    SpinManifoldParams,
    as_field,
    solve_model,
)


class Polarization(str, enum.Enum):
    E_PARALLEL_C = "E_parallel_c"
    E_PERP_C = "E_perp_c"
    BAC_PARALLEL_C = "Bac_parallel_c"
    BAC_PERP_C = "Bac_perp_c"

    @property
    def is_optical(self) -> bool:
        return self in (Polarization.E_PARALLEL_C, Polarization.E_PERP_C)

    @classmethod
    def parse(cls, value) -> "Polarization":
        if isinstance(value, cls):
            return value
        for p in cls:
            if value in (p.value, p.name):
                return p
        raise ValueError(f"unknown polarization {value!r}; expected one of {[p.value for p in cls]}")


class FieldMismatch(ValueError):
    pass


class LabelAmbiguity(ValueError):
    pass


OPTICAL_OPERATORS = {
    Polarization.E_PARALLEL_C: 2 * IZ,
    Polarization.E_PERP_C: 2 * SX,
}

LABELS: dict[tuple[int, int], str] = {
    (4, 1): "A",
    (3, 1): "B",
    (4, 2): "D",
    (3, 2): "E",
    (1, 3): "I",
    (2, 4): "I",
    (1, 1): "C1",
    (2, 1): "C2",
    (1, 2): "F1",
    (2, 2): "F2",
    (4, 3): "G3",
    (4, 4): "G4",
    (3, 3): "H3",
    (3, 4): "H4",
}
PAIRS_BY_LABEL: dict[str, list[tuple[int, int]]] = {}
for _pair, _lab in LABELS.items():
    PAIRS_BY_LABEL.setdefault(_lab, []).append(_pair)


@dataclass(frozen=True)
class OpticalDipoleScale:
    """Absolute scale of the optical dipole: moment in C*m and oscillator strength."""

    mu31: float = 5.7e-32
    oscillator_strength: float = 5.3e-6

    def __post_init__(self):
        if self.mu31 <= 0 or self.oscillator_strength <= 0:
            raise ValueError("dipole scale entries must be positive")


@dataclass(frozen=True)
class OpticalLine:
    label: str | None
    ground: int
    excited: int
    freq_GHz: float
    amplitude: complex
    polarization: Polarization


@dataclass(frozen=True)
class MicrowaveLine:
    manifold_tag: str
    pair: tuple[int, int]
    freq_GHz: float
    dipole_GHz_per_T: float
    amplitude: complex


@dataclass(frozen=True, eq=False)
class TransitionTable:
    ground: LevelSolution
    excited: LevelSolution
    optical: list[OpticalLine]
    microwave: list[MicrowaveLine]
    anchor_GHz: float
    zero_field_offset_GHz: float

    @property
    def field(self) -> FieldVector:
        return self.ground.field

    def optical_freq(self, g: int, e: int) -> float:
        """Absolute frequency of the ``(g, e)`` optical transition."""
        return self.anchor_GHz + (
            self.excited.energies[e - 1] - self.ground.energies[g - 1] - self.zero_field_offset_GHz
        )

    def offset(self, g: int, e: int) -> float:
        """Detuning from the zero-field transition A (GHz)."""
        return self.optical_freq(g, e) - self.anchor_GHz

    def lines(self, label: str | None = None, polarization: Polarization | None = None) -> list[OpticalLine]:
        out = self.optical
        if label is not None:
            out = [l for l in out if l.label == label]
        if polarization is not None:
            pol = Polarization.parse(polarization)
            out = [l for l in out if l.polarization is pol]
        return out

    def line(self, label: str, polarization) -> OpticalLine:
        found = self.lines(label, polarization)
        if len(found) != 1:
            raise KeyError(f"{len(found)} lines labelled {label!r} for {polarization}")
        return found[0]

    def amplitude_matrix(self, polarization) -> np.ndarray:
        return optical_amplitudes(self.ground, self.excited, Polarization.parse(polarization))

    def microwave_line(self, tag: str, pair: tuple[int, int], ac=Polarization.BAC_PARALLEL_C) -> MicrowaveLine:
        pair = tuple(sorted(pair))
        for m in self.microwave:
            if m.manifold_tag == tag and m.pair == pair:
                return m
        raise KeyError(f"no microwave line {tag} {pair}")

    def write_csv(self, path) -> Path:
        rows = (
            (
                l.label or "",
                l.ground,
                l.excited,
                format_float(l.freq_GHz),
                format_float(l.amplitude.real),
                format_float(l.amplitude.imag),
                l.polarization.value,
            )
            for l in self.optical
        )
        return write_csv(
            path, ("label", "ground_idx", "excited_idx", "freq_GHz", "amp_re", "amp_im", "polarization"), rows
        )


def optical_amplitudes(ground: LevelSolution, excited: LevelSolution, pol) -> np.ndarray:
    """Relative dipole amplitudes ``M[i, j] = <g_i| O_pol |e_j>``."""
    pol = Polarization.parse(pol)
    if not pol.is_optical:
        raise ValueError(f"{pol.value} is not an optical polarization")
    if not ground.field.same_as(excited.field):
        raise FieldMismatch("ground and excited solutions were computed at different fields")
    op = OPTICAL_OPERATORS[pol]
    return ground.vectors.conj().T @ op @ excited.vectors


def magnetic_operator(params: SpinManifoldParams, ac) -> np.ndarray:
    """Electron magnetic-moment operator along the ac field, in units of mu_B."""
    ac = Polarization.parse(ac)
    if ac is Polarization.BAC_PARALLEL_C:
        return params.g_parallel * SZ
    if ac is Polarization.BAC_PERP_C:
        return params.g_perp * SX
    raise ValueError(f"{ac.value} is not a microwave polarization")


def microwave_matrix(levels: LevelSolution, params: SpinManifoldParams, ac=Polarization.BAC_PARALLEL_C) -> np.ndarray:
    """Matrix of ``mu_B <i| g.S.e_ac |j>`` in GHz/T."""
    op = magnetic_operator(params, ac)
    return MU_B_GHZ_PER_T * (levels.vectors.conj().T @ op @ levels.vectors)


def microwave_amplitudes(
    levels: LevelSolution, params: SpinManifoldParams, ac=Polarization.BAC_PARALLEL_C
) -> list[MicrowaveLine]:
    """All ``i < j`` magnetic-dipole transitions within one manifold."""
    Z = microwave_matrix(levels, params, ac)
    out = []
    n = len(levels.energies)
    for i in range(n):
        for j in range(i + 1, n):
            out.append(
                MicrowaveLine(
                    params.manifold_tag,
                    (i + 1, j + 1),
                    float(levels.energies[j] - levels.energies[i]),
                    float(abs(Z[i, j])),
                    complex(Z[i, j]) / MU_B_GHZ_PER_T,
                )
            )
    return out


_ZERO_OFFSET_CACHE: dict[tuple, float] = {}


def zero_field_offset(model: ModelParams) -> float:
    """``E(|1>e) - E(|4>g)`` at zero field: the spin part of transition A."""
    key = (model.ground, model.excited)
    if key not in _ZERO_OFFSET_CACHE:
        g0, e0 = solve_model(model, 0.0)
        _ZERO_OFFSET_CACHE[key] = float(e0.energies[0] - g0.energies[3])
    return _ZERO_OFFSET_CACHE[key]


def build_transition_table(
    model: ModelParams,
    field,
    polarizations: Sequence = (Polarization.E_PARALLEL_C, Polarization.E_PERP_C),
    ac=Polarization.BAC_PARALLEL_C,
    labelled: bool = True,
) -> TransitionTable:
    fv = as_field(field)
    ground, excited = solve_model(model, fv)
    return table_from_levels(model, ground, excited, polarizations, ac, labelled)


def table_from_levels(
    model: ModelParams,
    ground: LevelSolution,
    excited: LevelSolution,
    polarizations: Sequence = (Polarization.E_PARALLEL_C, Polarization.E_PERP_C),
    ac=Polarization.BAC_PARALLEL_C,
    labelled: bool = True,
) -> TransitionTable:
    offset0 = zero_field_offset(model)
    optical = []
    for pol in polarizations:
        pol = Polarization.parse(pol)
        M = optical_amplitudes(ground, excited, pol)
        for i in range(4):
            for j in range(4):
                f = model.optical_anchor_GHz + excited.energies[j] - ground.energies[i] - offset0
                optical.append(OpticalLine(None, i + 1, j + 1, float(f), complex(M[i, j]), pol))
    microwave = microwave_amplitudes(ground, model.ground, ac) + microwave_amplitudes(excited, model.excited, ac)
    table = TransitionTable(ground, excited, optical, microwave, model.optical_anchor_GHz, offset0)
    return label_transitions(table) if labelled else table


def label_transitions(table: TransitionTable, ambiguity_MHz: float = 1.0) -> TransitionTable:
    """Attach letter labels by level-index pair.

    At zero field, lines carrying different letters that share a
    polarization and sit within ``ambiguity_MHz`` of each other raise
    ``LabelAmbiguity``: the labelling would not be recoverable from a
    spectrum.
    """
    labelled = [replace(l, label=LABELS.get((l.ground, l.excited))) for l in table.optical]
    if table.field.B_mT == 0.0 and len(labelled) > 1:
        tol = ambiguity_MHz * 1e-3
        by_pol: dict[Polarization, list[OpticalLine]] = {}
        for l in labelled:
            if l.label is not None and abs(l.amplitude) > 1e-9:
                by_pol.setdefault(l.polarization, []).append(l)
        for lines in by_pol.values():
            for a in range(len(lines)):
                for b in range(a + 1, len(lines)):
                    la, lb = lines[a], lines[b]
                    if la.label[0] != lb.label[0] and abs(la.freq_GHz - lb.freq_GHz) < tol:
                        raise LabelAmbiguity(
                            f"{la.label} and {lb.label} are within {ambiguity_MHz} MHz at zero field"
                        )
    return replace(table, optical=labelled)


@dataclass(frozen=True)
class ThreeLevelSystem:
    """Two optical legs closed by one microwave leg.

    ``kind`` is ``"V"`` (legs share a ground level) or ``"Lambda"`` (legs
    share an excited level).  The pump is the lower-frequency optical leg, so
    the output sits one microwave quantum above it.
    """

    kind: str
    shared: tuple[str, int]
    pump: OpticalLine
    output: OpticalLine
    microwave: MicrowaveLine
    loop_amplitude: complex

    @property
    def closure_residual_GHz(self) -> float:
        return abs(self.output.freq_GHz - self.pump.freq_GHz - self.microwave.freq_GHz)

    @property
    def pump_ground(self) -> int:
        return self.pump.ground


def v_lambda_systems(
    table: TransitionTable,
    polarization=Polarization.E_PARALLEL_C,
    ac=Polarization.BAC_PARALLEL_C,
    threshold: float = 1e-9,
    model: ModelParams | None = None,
) -> list[ThreeLevelSystem]:
    """Closed three-level loops available for transduction.

    ``loop_amplitude`` is the gauge-invariant product
    ``<pump_g|O|pump_e> <..|mu|..> <out_e|O|out_g>*`` (GHz/T) along the loop.
    Legs with relative amplitude below ``threshold`` count as forbidden.
    """
    pol = Polarization.parse(polarization)
    M = optical_amplitudes(table.ground, table.excited, pol)
    if model is None:
        Zg = {m.pair: m for m in table.microwave if m.manifold_tag == GROUND}
        Ze = {m.pair: m for m in table.microwave if m.manifold_tag == EXCITED}
    else:
        Zg = {m.pair: m for m in microwave_amplitudes(table.ground, model.ground, ac)}
        Ze = {m.pair: m for m in microwave_amplitudes(table.excited, model.excited, ac)}
    lines = {(l.ground, l.excited): l for l in table.optical if l.polarization is pol}
    out: list[ThreeLevelSystem] = []
    allowed = np.abs(M) > threshold
    for g in range(1, 5):
        for e1 in range(1, 5):
            for e2 in range(e1 + 1, 5):
                mw = Ze[(e1, e2)]
                if not (allowed[g - 1, e1 - 1] and allowed[g - 1, e2 - 1]) or mw.dipole_GHz_per_T <= threshold:
                    continue
                loop = M[g - 1, e1 - 1] * mw.amplitude * MU_B_GHZ_PER_T * np.conj(M[g - 1, e2 - 1])
                out.append(ThreeLevelSystem("V", (GROUND, g), lines[(g, e1)], lines[(g, e2)], mw, complex(loop)))
    for e in range(1, 5):
        for g1 in range(1, 5):
            for g2 in range(g1 + 1, 5):
                mw = Zg[(g1, g2)]
                if not (allowed[g1 - 1, e - 1] and allowed[g2 - 1, e - 1]) or mw.dipole_GHz_per_T <= threshold:
                    continue
                # pump from the upper ground level (lower optical frequency)
                loop = (
                    M[g2 - 1, e - 1] * np.conj(M[g1 - 1, e - 1]) * mw.amplitude * MU_B_GHZ_PER_T
                )
                out.append(
                    ThreeLevelSystem("Lambda", (EXCITED, e), lines[(g2, e)], lines[(g1, e)], mw, complex(loop))
                )
    return out
