"""Gaussian-membership fuzzy approximators with gradient-flow adaptation.

Two scalar approximators share one rule grid over the 4-state space:
f_hat(X) = theta_f . eps(X) and g_hat(X) = max(theta_g . eps(X), g_floor),
where eps(X) is the normalized product-inference basis vector.

Rules are enumerated in lexicographic order of the per-state membership
indices (l1, l2, l3, l4), the last index varying fastest (C order).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GaussianMF",
    "FuzzyModel",
    "DegenerateFiringError",
    "ParameterBlowupError",
    "membership",
    "basis",
    "basis_matrix",
    "f_hat",
    "g_hat",
    "adapt",
    "build_rule_grid",
    "fit_consequents_lsq",
    "snapshot_text",
]


class DegenerateFiringError(ArithmeticError):
    """Raised if the rule-firing normalizer degenerates to zero."""


class ParameterBlowupError(RuntimeError):
    """Raised when an adaptation step pushes a parameter past its bound."""


@dataclass(frozen=True)
class GaussianMF:
    center: float
    width: float

    def __post_init__(self) -> None:
        if self.width <= 0.0:
            raise ValueError("membership width must be positive")


def membership(mf: GaussianMF, x: float) -> float:
    """Gaussian membership degree exp(-((x - c) / w)^2 / 2), in (0, 1]."""
    z = (x - mf.center) / mf.width
    return float(np.exp(-0.5 * z * z))


@dataclass
class FuzzyModel:
    """Rule grid plus the two adaptable consequent vectors."""

    mfs: list[list[GaussianMF]]
    theta_f: np.ndarray
    theta_g: np.ndarray
    g_floor: float = 1.0
    state_ranges: tuple[tuple[float, float], ...] = ()
    # per-rule center/width grids, shape (n_rules, 4), derived from mfs
    centers: np.ndarray = field(init=False, repr=False)
    widths: np.ndarray = field(init=False, repr=False)
    # quadratic-expansion coefficients of the squared scaled distance,
    # s(x) = mat @ [x*x, x] + const per rule; hot-path form that needs a
    # single small matrix-vector product per evaluation
    _s_mat: np.ndarray = field(init=False, repr=False)
    _s_const: np.ndarray = field(init=False, repr=False)
    _scratch: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.g_floor <= 0.0:
            raise ValueError("g_floor must be positive")
        counts = [len(group) for group in self.mfs]
        n_rules = int(np.prod(counts))
        if self.theta_f.shape != (n_rules,) or self.theta_g.shape != (n_rules,):
            raise ValueError(
                f"theta vectors must have length {n_rules} for MF counts {counts}"
            )
        if not (np.all(np.isfinite(self.theta_f)) and np.all(np.isfinite(self.theta_g))):
            raise ValueError("theta vectors must be finite")
        per_state_centers = [np.array([m.center for m in group]) for group in self.mfs]
        per_state_widths = [np.array([m.width for m in group]) for group in self.mfs]
        self.centers = np.stack(
            np.meshgrid(*per_state_centers, indexing="ij"), axis=-1
        ).reshape(n_rules, len(self.mfs))
        self.widths = np.stack(
            np.meshgrid(*per_state_widths, indexing="ij"), axis=-1
        ).reshape(n_rules, len(self.mfs))
        inv_sq = 1.0 / (self.widths * self.widths)
        self._s_mat = np.hstack([inv_sq, -2.0 * self.centers * inv_sq])
        self._s_const = np.sum(self.centers * self.centers * inv_sq, axis=1)
        self._scratch = np.empty(2 * len(self.mfs))

    @property
    def n_rules(self) -> int:
        return self.theta_f.shape[0]

    def _replace_thetas(self, theta_f: np.ndarray, theta_g: np.ndarray) -> "FuzzyModel":
        clone = FuzzyModel.__new__(FuzzyModel)
        clone.mfs = self.mfs
        clone.theta_f = theta_f
        clone.theta_g = theta_g
        clone.g_floor = self.g_floor
        clone.state_ranges = self.state_ranges
        clone.centers = self.centers
        clone.widths = self.widths
        clone._s_mat = self._s_mat
        clone._s_const = self._s_const
        clone._scratch = np.empty_like(self._scratch)
        return clone


def basis(model: FuzzyModel, X: np.ndarray) -> np.ndarray:
    """Normalized rule-firing vector at state X; components sum to 1.

    The shared exponential shift does not change the normalized value and
    keeps the normalizer away from underflow for states far outside the
    membership ranges. The squared scaled distance is evaluated through
    its precomputed quadratic expansion, two matrix-vector products per
    call on the hot path.
    """
    x = np.asarray(X, dtype=float)
    n = x.shape[0]
    # scratch reuse: evaluations on one model are sequential by contract
    v = model._scratch
    np.multiply(x, x, out=v[:n])
    v[n:] = x
    s = model._s_mat @ v
    s += model._s_const
    s -= s.min()
    s *= -0.5
    w = np.exp(s, out=s)
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateFiringError("rule-firing normalizer degenerated to zero")
    w /= total
    return w


def basis_matrix(model: FuzzyModel, X: np.ndarray) -> np.ndarray:
    """Row-wise basis vectors for a batch of states, shape (len(X), n_rules)."""
    X = np.asarray(X, dtype=float)
    out = np.empty((X.shape[0], model.n_rules))
    # chunked to keep the (rows, rules, 4) intermediate small
    chunk = max(1, 2_000_000 // max(model.n_rules, 1))
    for start in range(0, X.shape[0], chunk):
        rows = X[start : start + chunk]
        z = (rows[:, None, :] - model.centers[None, :, :]) / model.widths[None, :, :]
        s = np.sum(z * z, axis=2)
        w = np.exp(-0.5 * (s - s.min(axis=1, keepdims=True)))
        total = w.sum(axis=1, keepdims=True)
        if not np.all(np.isfinite(total)) or np.any(total <= 0.0):
            raise DegenerateFiringError("rule-firing normalizer degenerated to zero")
        out[start : start + chunk] = w / total
    return out


def f_hat(model: FuzzyModel, X: np.ndarray) -> float:
    """Drift estimate theta_f . eps(X)."""
    return float(model.theta_f @ basis(model, X))


def g_hat(model: FuzzyModel, X: np.ndarray) -> float:
    """Input-gain estimate theta_g . eps(X), clamped below at g_floor."""
    return max(float(model.theta_g @ basis(model, X)), model.g_floor)


def fg_hat(model: FuzzyModel, X: np.ndarray) -> tuple:
    """Both estimates from a single basis evaluation (hot-loop helper)."""
    eps = basis(model, X)
    f = float(model.theta_f @ eps)
    g = max(float(model.theta_g @ eps), model.g_floor)
    return f, g


def adapt(
    model: FuzzyModel,
    e: np.ndarray,
    P: np.ndarray,
    b: np.ndarray,
    X: np.ndarray,
    u: float,
    dt: float,
    gain: float = 1.0,
    theta_bound: float = 1e6,
) -> FuzzyModel:
    """One forward-Euler step of the Lyapunov-gradient adaptation laws.

    theta_f' = -gain * (e.P b) * eps(X)
    theta_g' = -gain * (e.P b) * eps(X) * u

    Returns a new model; the rule grid is shared with the input model.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    s = float(np.asarray(e, dtype=float) @ (np.asarray(P, dtype=float) @ np.asarray(b, dtype=float)))
    eps = basis(model, X)
    drive = dt * gain * s * eps
    theta_f = model.theta_f - drive
    theta_g = model.theta_g - drive * u
    peak = max(float(np.max(np.abs(theta_f))), float(np.max(np.abs(theta_g))))
    if peak > theta_bound:
        raise ParameterBlowupError(
            f"adaptation pushed |theta| to {peak:.3e}, beyond bound {theta_bound:.3e}"
        )
    return model._replace_thetas(theta_f, theta_g)


def build_rule_grid(
    per_state_mf_counts: tuple[int, int, int, int],
    state_ranges: tuple[tuple[float, float], ...],
    g_floor: float = 1.0,
) -> FuzzyModel:
    """Evenly spaced Gaussian grid; zero-initialized consequents.

    Widths are spacing / sqrt(2) so adjacent memberships cross at
    exp(-1/4). A single membership on a state covers the half-range.
    """
    if len(per_state_mf_counts) != 4 or len(state_ranges) != 4:
        raise ValueError("expected 4 MF counts and 4 state ranges")
    mfs: list[list[GaussianMF]] = []
    for count, (lo, hi) in zip(per_state_mf_counts, state_ranges):
        if count < 1:
            raise ValueError(f"MF count must be >= 1, got {count}")
        if not hi > lo:
            raise ValueError(f"state range ({lo}, {hi}) is not increasing")
        if count == 1:
            mfs.append([GaussianMF(0.5 * (lo + hi), 0.5 * (hi - lo))])
            continue
        centers = np.linspace(lo, hi, count)
        width = (centers[1] - centers[0]) / np.sqrt(2.0)
        mfs.append([GaussianMF(float(c), float(width)) for c in centers])
    n_rules = int(np.prod(per_state_mf_counts))
    return FuzzyModel(
        mfs=mfs,
        theta_f=np.zeros(n_rules),
        theta_g=np.zeros(n_rules),
        g_floor=g_floor,
        state_ranges=tuple((float(lo), float(hi)) for lo, hi in state_ranges),
    )


def fit_consequents_lsq(
    model: FuzzyModel,
    f_target,
    g_value: float | None = None,
    n_samples: int = 4000,
    seed: int = 0,
) -> FuzzyModel:
    """Least-squares fit of theta_f to a target drift over the state ranges.

    f_target maps an (n, 4) state batch to n drift values. theta_g is set
    uniformly to g_value when given (the basis sums to 1, so g_hat is then
    exactly g_value everywhere above the floor); otherwise left unchanged.
    """
    if not model.state_ranges:
        raise ValueError("model carries no state ranges to sample")
    rng = np.random.default_rng(seed)
    lo = np.array([r[0] for r in model.state_ranges])
    hi = np.array([r[1] for r in model.state_ranges])
    X = rng.uniform(lo, hi, size=(n_samples, 4))
    E = basis_matrix(model, X)
    targets = np.asarray(f_target(X), dtype=float)
    theta_f, *_ = np.linalg.lstsq(E, targets, rcond=None)
    theta_g = model.theta_g if g_value is None else np.full(model.n_rules, float(g_value))
    return model._replace_thetas(theta_f, theta_g)


def snapshot_text(model: FuzzyModel) -> str:
    """Flat text serialization, one value per line.

    Ordering: for each state variable, the MF count then all centers then
    all widths; then every theta_f component; then every theta_g component
    in rule order; then g_floor.
    """
    lines: list[str] = []
    for group in model.mfs:
        lines.append(repr(len(group)))
        lines.extend(repr(m.center) for m in group)
        lines.extend(repr(m.width) for m in group)
    lines.extend(repr(float(v)) for v in model.theta_f)
    lines.extend(repr(float(v)) for v in model.theta_g)
    lines.append(repr(model.g_floor))
    return "\n".join(lines) + "\n"
