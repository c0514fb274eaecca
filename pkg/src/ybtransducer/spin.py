"""Effective spin Hamiltonian of the lowest 171Yb3+:YVO4 doublets.

Each manifold (ground 2F7/2(0), excited 2F5/2(0)) is an effective electron
spin S=1/2 coupled to the I=1/2 nucleus through an axial hyperfine tensor,
with an axial Zeeman term.  Energies are in GHz throughout.

Product-basis ordering is ``|up,Up>, |up,Dn>, |dn,Up>, |dn,Dn>`` (electron
first, nucleus second).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .constants import MU_B_GHZ_PER_T
from .io import KVFile, format_float, read_kv, parse_kv, write_csv

GROUND = "ground"
EXCITED = "excited"
MANIFOLDS = (GROUND, EXCITED)

# Optical anchor: transition A at zero field.
ANCHOR_A_GHZ = 304501.0

_sx = np.array([[0, 1], [1, 0]], dtype=complex) / 2
_sy = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
_sz = np.array([[1, 0], [0, -1]], dtype=complex) / 2
_id2 = np.eye(2, dtype=complex)

SX, SY, SZ = (np.kron(s, _id2) for s in (_sx, _sy, _sz))
IX, IY, IZ = (np.kron(_id2, s) for s in (_sx, _sy, _sz))

UP_UP = np.array([1, 0, 0, 0], dtype=complex)
UP_DN = np.array([0, 1, 0, 0], dtype=complex)
DN_UP = np.array([0, 0, 1, 0], dtype=complex)
DN_DN = np.array([0, 0, 0, 1], dtype=complex)


class NotHermitian(ValueError):
    pass


class Underdetermined(ValueError):
    pass


@dataclass(frozen=True)
class SpinManifoldParams:
    """Axial g and hyperfine tensors of one manifold.

    ``A_parallel`` and ``A_perp`` are in GHz.  ``A_perp`` is kept
    non-negative; the relative sign between hyperfine components is carried
    by ``A_parallel`` (negative for the ground manifold, positive for the
    excited one).
    """

    g_parallel: float
    g_perp: float
    A_parallel: float
    A_perp: float
    manifold_tag: str

    def __post_init__(self):
        if self.manifold_tag not in MANIFOLDS:
            raise ValueError(f"manifold_tag must be one of {MANIFOLDS}, got {self.manifold_tag!r}")
        if self.g_parallel < 0 or self.g_perp < 0:
            raise ValueError("g-tensor components must be non-negative")
        if self.A_perp < 0:
            raise ValueError("A_perp must be non-negative")


@dataclass(frozen=True)
class FieldVector:
    """Static field: signed magnitude in mT along a unit ``orientation`` (crystal frame, c = z)."""

    B_mT: float
    orientation: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        o = np.asarray(self.orientation, dtype=float)
        if o.shape != (3,):
            raise ValueError("orientation must be a 3-vector")
        if abs(np.linalg.norm(o) - 1.0) > 1e-12:
            raise ValueError(f"orientation must have unit norm, got |o| = {np.linalg.norm(o)!r}")
        object.__setattr__(self, "orientation", tuple(float(x) for x in o))
        object.__setattr__(self, "B_mT", float(self.B_mT))

    @classmethod
    def along(cls, B_mT: float, direction: Sequence[float]) -> "FieldVector":
        d = np.asarray(direction, dtype=float)
        return cls(B_mT, tuple(d / np.linalg.norm(d)))

    @property
    def vector_T(self) -> np.ndarray:
        return 1e-3 * self.B_mT * np.asarray(self.orientation)

    def same_as(self, other: "FieldVector", tol: float = 1e-12) -> bool:
        return bool(np.allclose(self.vector_T, other.vector_T, rtol=0, atol=tol * 1e-3))


def as_field(field) -> FieldVector:
    if isinstance(field, FieldVector):
        return field
    return FieldVector(float(field))


@dataclass(frozen=True)
class ModelParams:
    ground: SpinManifoldParams
    excited: SpinManifoldParams
    optical_anchor_GHz: float = ANCHOR_A_GHZ

    def manifold(self, tag: str) -> SpinManifoldParams:
        return {GROUND: self.ground, EXCITED: self.excited}[tag]


@dataclass(frozen=True, eq=False)
class LevelSolution:
    """Eigen-decomposition of one manifold at one field.

    ``vectors[:, k]`` is the eigenvector of level ``|k+1>``; energies ascend.
    """

    field: FieldVector
    energies: np.ndarray
    vectors: np.ndarray
    manifold_tag: str | None = None

    @property
    def field_mT(self) -> float:
        return self.field.B_mT

    @property
    def labels(self) -> tuple[str, ...]:
        suffix = {GROUND: "g", EXCITED: "e"}.get(self.manifold_tag, "")
        return tuple(f"|{k + 1}>{suffix}" for k in range(len(self.energies)))

    def gap(self, i: int, j: int) -> float:
        """Energy of level ``j`` minus level ``i`` (1-based labels)."""
        return float(self.energies[j - 1] - self.energies[i - 1])

    def matrix_element(self, op: np.ndarray, i: int, j: int) -> complex:
        """<i|op|j> with 1-based labels."""
        return complex(self.vectors[:, i - 1].conj() @ op @ self.vectors[:, j - 1])

    def regauged(self, phases: Sequence[float]) -> "LevelSolution":
        """Same solution with each eigenvector multiplied by ``exp(i*phase)``."""
        ph = np.exp(1j * np.asarray(phases, dtype=float))
        return replace(self, vectors=self.vectors * ph[None, :])


def build_hamiltonian(params: SpinManifoldParams, field) -> np.ndarray:
    """Zeeman plus hyperfine Hamiltonian in GHz for one manifold."""
    bx, by, bz = as_field(field).vector_T
    zeeman = MU_B_GHZ_PER_T * (
        params.g_parallel * bz * SZ + params.g_perp * (bx * SX + by * SY)
    )
    hyperfine = params.A_parallel * (SZ @ IZ) + params.A_perp * (SX @ IX + SY @ IY)
    H = zeeman + hyperfine
    return (H + H.conj().T) / 2


def _fix_phase(v: np.ndarray) -> np.ndarray:
    mags = np.abs(v)
    k = int(np.flatnonzero(mags >= mags.max() - 1e-10)[0])
    return v * (np.conj(v[k]) / mags[k])


def _canonical_cluster_basis(V: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of the column span of ``V``."""
    m = V.shape[1]
    P = V @ V.conj().T
    norms = np.linalg.norm(P, axis=0)
    order = sorted(range(P.shape[0]), key=lambda k: (-round(norms[k], 9), k))
    basis: list[np.ndarray] = []
    for k in order:
        v = P[:, k].copy()
        for b in basis:
            v -= (b.conj() @ v) * b
        nv = np.linalg.norm(v)
        if nv > 1e-6:
            basis.append(v / nv)
        if len(basis) == m:
            break
    basis.sort(key=lambda b: -round(abs(b[0]), 9))
    return np.column_stack(basis)


def eigensolve(H: np.ndarray, field=None, manifold_tag: str | None = None) -> LevelSolution:
    """Diagonalise a small Hermitian matrix with deterministic output.

    Degenerate eigenspaces get a basis built from the canonical product
    states, ordered by decreasing overlap with ``|up,Up>``; every eigenvector
    has its largest-magnitude component made real and positive.
    """
    H = np.asarray(H, dtype=complex)
    scale = max(1.0, float(np.linalg.norm(H, 2)))
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise NotHermitian("input must be a square matrix")
    if np.max(np.abs(H - H.conj().T)) > 1e-10 * scale:
        raise NotHermitian("matrix is not Hermitian to 1e-10")
    w, V = np.linalg.eigh((H + H.conj().T) / 2)
    tol = 1e-11 * scale
    out = V.copy()
    start = 0
    n = len(w)
    while start < n:
        stop = start + 1
        while stop < n and w[stop] - w[stop - 1] <= tol:
            stop += 1
        if stop - start > 1:
            out[:, start:stop] = _canonical_cluster_basis(V[:, start:stop])
        start = stop
    for k in range(n):
        out[:, k] = _fix_phase(out[:, k])
    fv = as_field(field) if field is not None else FieldVector(0.0)
    return LevelSolution(fv, w.astype(float), out, manifold_tag)


def solve_manifold(params: SpinManifoldParams, field) -> LevelSolution:
    fv = as_field(field)
    return eigensolve(build_hamiltonian(params, fv), fv, params.manifold_tag)


def solve_model(model: ModelParams, field) -> tuple[LevelSolution, LevelSolution]:
    fv = as_field(field)
    return solve_manifold(model.ground, fv), solve_manifold(model.excited, fv)


# Zero-field level energies as linear forms in (A_parallel, A_perp) under the
# sign conventions of SpinManifoldParams.
_ZERO_FIELD_FORMS = {
    GROUND: np.array([[0.25, 0.0], [0.25, 0.0], [-0.25, -0.5], [-0.25, 0.5]]),
    EXCITED: np.array([[-0.25, -0.5], [-0.25, 0.5], [0.25, 0.0], [0.25, 0.0]]),
}


def fit_hyperfine(
    zero_field_gaps: Iterable[tuple[str, tuple[int, int], float]],
    defaults: dict[str, SpinManifoldParams] | None = None,
    require: dict[str, Sequence[str]] | None = None,
) -> dict[str, SpinManifoldParams]:
    """Hyperfine constants from measured zero-field level gaps.

    Each gap is ``(manifold_tag, (i, j), E_j - E_i)`` with 1-based level
    labels.  The mixed-pair gap (``|1>e-|2>e`` or ``|3>g-|4>g``) fixes
    ``A_perp`` on its own; ``A_parallel`` needs a gap that spans the pure and
    mixed levels (transition C minus transition A gives ``|1>g-|4>g``).
    Components the data cannot reach keep the value from ``defaults``.

    Raises ``Underdetermined`` when a component listed in ``require``
    (default: ``A_perp`` of every manifold that has data) is not fixed.
    """
    gaps = [(tag, tuple(pair), float(v)) for tag, pair, v in zero_field_gaps]
    rows: dict[str, list[tuple[np.ndarray, float]]] = {m: [] for m in MANIFOLDS}
    for tag, (i, j), value in gaps:
        if tag not in MANIFOLDS:
            raise ValueError(f"unknown manifold {tag!r}")
        forms = _ZERO_FIELD_FORMS[tag]
        rows[tag].append((forms[j - 1] - forms[i - 1], float(value)))
    defaults = defaults or {}
    if require is None:
        require = {m: ("A_perp",) for m in MANIFOLDS if rows[m]}
    out: dict[str, SpinManifoldParams] = {}
    names = ("A_parallel", "A_perp")
    for tag in MANIFOLDS:
        base = defaults.get(tag, SpinManifoldParams(0.0, 0.0, 0.0, 0.0, tag))
        current = np.array([base.A_parallel, base.A_perp])
        needed = set(require.get(tag, ()))
        if not rows[tag]:
            if needed:
                raise Underdetermined(f"no gaps supplied for {tag} manifold")
            out[tag] = base
            continue
        M = np.array([r for r, _ in rows[tag]])
        y = np.array([v for _, v in rows[tag]])
        rank = np.linalg.matrix_rank(M, tol=1e-12)
        if rank == 2:
            solved = np.linalg.lstsq(M, y, rcond=None)[0]
            fixed = {0, 1}
        elif rank == 0:
            # gaps between degenerate zero-field levels carry no information
            solved, fixed = current.copy(), set()
        else:
            # one direction is determined; decide which parameter it pins
            direction = M[np.argmax(np.linalg.norm(M, axis=1))]
            if abs(direction[0]) < 1e-12:
                free, hold = 1, 0
            elif abs(direction[1]) < 1e-12:
                free, hold = 0, 1
            else:
                want = [k for k, nm in enumerate(names) if nm in needed]
                if len(want) != 1:
                    raise Underdetermined(
                        f"{tag}: gaps fix only one combination of A_parallel and A_perp"
                    )
                free, hold = want[0], 1 - want[0]
            resid = y - M[:, hold] * current[hold]
            solved = current.copy()
            solved[free] = float(np.linalg.lstsq(M[:, [free]], resid, rcond=None)[0][0])
            fixed = {free}
        missing = [nm for k, nm in enumerate(names) if nm in needed and k not in fixed]
        if missing:
            raise Underdetermined(f"{tag}: cannot determine {missing} from the given gaps")
        a_par, a_perp = float(solved[0]), float(solved[1])
        if a_perp < 0:
            if abs(a_perp) > 1e-12:
                raise ValueError(f"{tag}: gaps imply negative A_perp ({a_perp:.6g} GHz)")
            a_perp = 0.0
        params = replace(base, A_parallel=a_par, A_perp=a_perp)
        # the linear forms assume the conventional level ordering; verify it held
        expected = _ZERO_FIELD_FORMS[tag] @ np.array([a_par, a_perp])
        actual = solve_manifold(params, 0.0).energies
        if not np.allclose(np.sort(expected), actual, atol=1e-9) or not np.allclose(expected, actual, atol=1e-9):
            raise ValueError(
                f"{tag}: fitted constants (A_parallel={a_par:.6g}, A_perp={a_perp:.6g}) break the "
                "assumed zero-field level ordering; supply a consistent A_parallel default"
            )
        out[tag] = params
    return out


def fit_g_parallel(spin_dipole_GHz_per_T: float, manifold_tag: str) -> float:
    """g_parallel from the c-axis dipole of the zero-field mixed pair (matrix element 1/2)."""
    if manifold_tag not in MANIFOLDS:
        raise ValueError(f"unknown manifold {manifold_tag!r}")
    return 2.0 * float(spin_dipole_GHz_per_T) / MU_B_GHZ_PER_T


@dataclass(frozen=True, eq=False)
class LevelScan:
    B_mT: np.ndarray
    ground: list[LevelSolution]
    excited: list[LevelSolution]
    orientation: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def energies(self, tag: str) -> np.ndarray:
        sols = self.ground if tag == GROUND else self.excited
        return np.array([s.energies for s in sols])

    def write_csv(self, outdir) -> list[Path]:
        outdir = Path(outdir)
        paths = []
        for tag in MANIFOLDS:
            E = self.energies(tag)
            rows = (
                (format_float(b), k + 1, format_float(E[n, k]))
                for n, b in enumerate(self.B_mT)
                for k in range(E.shape[1])
            )
            paths.append(write_csv(outdir / f"levels_{tag}.csv", ("B_mT", "level_index", "energy_GHz"), rows))
        return paths


def field_grid(start: float, stop: float, step: float) -> np.ndarray:
    if step <= 0:
        raise ValueError("step must be positive")
    if stop < start:
        raise ValueError("stop must not be below start")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def level_diagram_scan(
    model: ModelParams,
    start_mT: float,
    stop_mT: float,
    step_mT: float,
    orientation: Sequence[float] = (0.0, 0.0, 1.0),
    threads: int = 1,
) -> LevelScan:
    """Level energies of both manifolds on a uniform field grid."""
    grid = field_grid(start_mT, stop_mT, step_mT)
    fields = [FieldVector.along(b, orientation) if b != 0 else FieldVector(0.0, tuple(orientation)) for b in grid]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            pairs = list(pool.map(lambda f: solve_model(model, f), fields))
    else:
        pairs = [solve_model(model, f) for f in fields]
    return LevelScan(grid, [g for g, _ in pairs], [e for _, e in pairs], tuple(fields[0].orientation))


# -- parameter files -------------------------------------------------------

_PARAM_KEYS = ("g_parallel", "g_perp", "A_parallel", "A_perp")


def params_from_kv(kv: KVFile) -> ModelParams:
    manifolds = {}
    for tag in MANIFOLDS:
        values = {k: kv.get_float(f"{tag}.{k}") for k in _PARAM_KEYS}
        try:
            manifolds[tag] = SpinManifoldParams(manifold_tag=tag, **values)
        except ValueError as exc:
            raise kv.error(f"{tag}.A_perp", str(exc)) from None
    anchor = kv.get_float("optical_anchor_GHz", ANCHOR_A_GHZ)
    known = {f"{t}.{k}" for t in MANIFOLDS for k in _PARAM_KEYS} | {"optical_anchor_GHz"}
    for key in kv:
        if key not in known:
            raise kv.error(key, f"unknown parameter '{key}'")
    return ModelParams(manifolds[GROUND], manifolds[EXCITED], anchor)


def load_params(path) -> ModelParams:
    return params_from_kv(read_kv(path))


def default_params() -> ModelParams:
    text = resources.files("ybtransducer.data").joinpath("yb171_yvo.params").read_text()
    return params_from_kv(parse_kv(text, "yb171_yvo.params"))


def format_params(model: ModelParams) -> str:
    lines = []
    for tag in MANIFOLDS:
        p = model.manifold(tag)
        for k in _PARAM_KEYS:
            lines.append(f"{tag}.{k} = {format_float(getattr(p, k))}")
    lines.append(f"optical_anchor_GHz = {format_float(model.optical_anchor_GHz)}")
    return "\n".join(lines) + "\n"
