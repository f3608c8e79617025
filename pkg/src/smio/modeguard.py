"""Residuals, residual-norm thresholds, mode elimination, fusion, and
offline mode-distinguishability certificates.

Each mode observer emits a residual on its attack-free output directions.
When the hypothesis is correct, that residual is a fixed linear map of the
initial estimation error and the noise history, so its norm can never
exceed a computable threshold; a measured residual above the threshold
eliminates the hypothesis outright.  Two thresholds are maintained — a
per-step vertex bound over the noise hypercube and a closed-form triangle
bound driven by the error dynamics — and their minimum is the operative
test.  All block matrices come from one shared incremental generator
(:class:`ThresholdTracker`) so the stacked map, the triangle bound, and
their asymptotics can never drift apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .decomposition import ErrorDynamics, ModeDecomposition
from .model import SystemModel
from .observer import SetEstimate

__all__ = [
    "ResidualRecord",
    "StackedResidualModel",
    "GlobalEstimate",
    "PairRecord",
    "DetectabilityReport",
    "ThresholdTracker",
    "DivergenceError",
    "AllModesEliminatedError",
    "UnsupportedPairError",
    "residual",
    "residual_conditioned",
    "build_stacked",
    "threshold_inf",
    "threshold_tri",
    "tri_limit",
    "eta_t",
    "eliminate",
    "fuse",
    "detectability_report",
    "stacked_residual_general",
]


class DivergenceError(ValueError):
    """The asymptotic threshold does not exist because the error map is expansive."""


class AllModesEliminatedError(RuntimeError):
    """Every hypothesis was eliminated.

    The true mode can never trip its own threshold, so an empty survivor
    set means the configuration violates an assumption (wrong mode family,
    understated noise bounds, or inconsistent data) — it is reported as a
    fault, not as a conclusion.
    """


class UnsupportedPairError(ValueError):
    """A cross-mode computation was requested for modes whose residual dimensions differ."""


def _norm2(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


# --------------------------------------------------------------------- types


@dataclass(frozen=True, eq=False)
class ResidualRecord:
    """One mode's residual test at one step."""

    mode_id: int
    k: int
    r: np.ndarray = field(repr=False)
    r_norm: float
    delta_inf: float | None
    delta_tri: float
    delta_hat: float
    eliminated: bool

    @classmethod
    def evaluate(cls, mode_id, k, r, delta_inf, delta_tri) -> "ResidualRecord":
        r = np.asarray(r, dtype=float).reshape(-1)
        r_norm = float(np.linalg.norm(r))
        delta_tri = float(delta_tri)
        delta_hat = delta_tri if delta_inf is None else min(float(delta_inf), delta_tri)
        return cls(
            mode_id=int(mode_id),
            k=int(k),
            r=r,
            r_norm=r_norm,
            delta_inf=None if delta_inf is None else float(delta_inf),
            delta_tri=delta_tri,
            delta_hat=delta_hat,
            eliminated=eliminate(r_norm, delta_hat),
        )


@dataclass(frozen=True, eq=False)
class StackedResidualModel:
    """The residual at level k as one linear map of the stacked uncertainty.

    ``Aq_k`` multiplies the column ``[e0 | w_0..w_{k-1} | v_0..v_k]`` and
    ``bounds`` holds the per-coordinate box radii of the enclosing
    hypercube (initial-error radius for the first n coordinates, then the
    process-noise bound for n*k, then the measurement-noise bound for
    l*(k+1)).
    """

    k: int
    n: int
    l: int
    Aq_k: np.ndarray = field(repr=False)
    bounds: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class GlobalEstimate:
    """Survivor set with the explicit union of per-mode balls (no hull collapse)."""

    active: tuple[int, ...]
    state_balls: tuple[SetEstimate, ...]
    input_balls: tuple[SetEstimate, ...]


@dataclass(frozen=True, eq=False)
class PairRecord:
    """Distinguishability data for one ordered mode pair."""

    q: int
    q_prime: int
    dimension_matched: bool
    W: np.ndarray | None = field(repr=False)
    sigma_min: float | None
    threshold_ratio: float | None
    condition_i: bool | None
    condition_ii: bool


@dataclass(frozen=True, eq=False)
class DetectabilityReport:
    """All ordered-pair records plus the two overall certificates.

    ``overall_condition_i`` certifies via the separation inequality on
    every (dimension-matched) pair; ``overall_condition_ii`` via pairwise
    distinct residual subspaces.  Self-pairs are reported but excluded
    from both verdicts.  ``note`` records the bound substitution used on
    the right-hand side of condition (i).
    """

    pairs: tuple[PairRecord, ...]
    overall_condition_i: bool
    overall_condition_ii: bool
    certified: bool
    note: str

    def to_dict(self) -> dict:
        return {
            "overall_condition_i": self.overall_condition_i,
            "overall_condition_ii": self.overall_condition_ii,
            "certified": self.certified,
            "note": self.note,
            "pairs": [
                {
                    "q": p.q,
                    "q_prime": p.q_prime,
                    "dimension_matched": p.dimension_matched,
                    "sigma_min": p.sigma_min,
                    "threshold_ratio": p.threshold_ratio,
                    "condition_i": p.condition_i,
                    "condition_ii": p.condition_ii,
                }
                for p in self.pairs
            ],
        }


# ----------------------------------------------------------------- residuals


def residual(dec: ModeDecomposition, xhat_star, u_k, y_k) -> np.ndarray:
    """r_k = T2 y_k - C2 xhat_star - D2 u_k on the attack-free output directions."""
    xhat_star = np.asarray(xhat_star, dtype=float).reshape(-1)
    u_k = np.asarray(u_k, dtype=float).reshape(-1)
    y_k = np.asarray(y_k, dtype=float).reshape(-1)
    return dec.T2 @ y_k - dec.C2 @ xhat_star - dec.D2 @ u_k


def residual_conditioned(
    dec_q: ModeDecomposition, dec_qstar: ModeDecomposition, xhat_star_q, u_k, y_k
) -> np.ndarray:
    """The mode-q residual re-based on the true mode's attack-free directions.

    Subtracting this from :func:`residual` isolates the cross-mode output
    rotation: ``residual(...) - residual_conditioned(...)`` equals
    ``(T2_q - T2_qstar) @ y_k`` exactly.  Only defined when both modes have
    the same residual dimension.
    """
    if dec_q.residual_dim != dec_qstar.residual_dim:
        raise UnsupportedPairError(
            f"residual dimensions differ ({dec_q.residual_dim} vs {dec_qstar.residual_dim})"
        )
    xhat_star_q = np.asarray(xhat_star_q, dtype=float).reshape(-1)
    u_k = np.asarray(u_k, dtype=float).reshape(-1)
    y_k = np.asarray(y_k, dtype=float).reshape(-1)
    return dec_qstar.T2 @ y_k - dec_q.C2 @ xhat_star_q - dec_q.D2 @ u_k


# ------------------------------------------------------- incremental tracker


class ThresholdTracker:
    """Incrementally maintained residual-threshold state for one mode.

    One matrix multiply per step keeps the row family C2*Abar*Ae^j, its
    running norm sums, and (while k stays at or below ``k_inf_cutoff``) the
    cached blocks needed to assemble the stacked residual map.  The
    :func:`build_stacked` / :func:`threshold_tri` functions are thin
    stateless wrappers over a throwaway tracker, so there is exactly one
    definition of the blocks in the package.
    """

    def __init__(
        self,
        errdyn: ErrorDynamics,
        dec: ModeDecomposition,
        eta_w: float = 0.0,
        eta_v: float = 0.0,
        delta_x0: float = 0.0,
        k_inf_cutoff: int = 25,
        enum_budget: int = 16,
    ):
        self.eta_w = float(eta_w)
        self.eta_v = float(eta_v)
        self.delta_x0 = float(delta_x0)
        self.k_inf_cutoff = int(k_inf_cutoff)
        self.enum_budget = int(enum_budget)
        self.k = 0

        C2 = dec.C2
        self._Ae = errdyn.Ae
        self._Bew = errdyn.Bew
        self._Bev1 = errdyn.Bev1
        self._Mv = errdyn.Bev1 + errdyn.Ae @ errdyn.Bev2
        self._C2A = C2 @ errdyn.Abar
        self._n = errdyn.Abar.shape[0]
        self._l = dec.T2.shape[1]
        # k-independent boundary blocks
        self._w_last = C2 @ errdyn.Bew_star
        self._v0_at_k1 = C2 @ errdyn.Bev1_star
        self._v_prev = C2 @ (errdyn.Bev1_star + errdyn.Abar @ errdyn.Bev2)
        self._v_last = C2 @ errdyn.Bev2_star + dec.T2
        self._nw_last = _norm2(self._w_last)
        self._nv0_at_k1 = _norm2(self._v0_at_k1)
        self._nv_prev = _norm2(self._v_prev)
        self._nv_last = _norm2(self._v_last)
        # per-power state: rows[j] = C2 Abar Ae^j, plus cached products/norms
        self._last_row: np.ndarray | None = None
        self._rows: list[np.ndarray] = []
        self._wprod: list[np.ndarray] = []
        self._bprod: list[np.ndarray] = []
        self._mvprod: list[np.ndarray] = []
        self._row_norm: list[float] = []
        self._cum_w: list[float] = []
        self._cum_mv: list[float] = []
        self._bev1_norm: list[float] = []

    def _append_power(self) -> None:
        j = len(self._row_norm)
        row = self._C2A if j == 0 else self._last_row @ self._Ae
        self._last_row = row
        wp = row @ self._Bew
        bp = row @ self._Bev1
        mp = row @ self._Mv
        self._row_norm.append(_norm2(row))
        self._bev1_norm.append(_norm2(bp))
        prev_w = self._cum_w[-1] if self._cum_w else 0.0
        prev_mv = self._cum_mv[-1] if self._cum_mv else 0.0
        self._cum_w.append(prev_w + _norm2(wp))
        self._cum_mv.append(prev_mv + _norm2(mp))
        if j <= self.k_inf_cutoff:
            self._rows.append(row)
            self._wprod.append(wp)
            self._bprod.append(bp)
            self._mvprod.append(mp)

    def advance(self) -> tuple[float | None, float, float]:
        """Move to the next step and return (delta_inf, delta_tri, delta_hat)."""
        self.k += 1
        self._append_power()
        dtri = self.threshold_tri()
        if self.k <= self.k_inf_cutoff:
            dinf = threshold_inf(self.stacked(), enum_budget=self.enum_budget)
            return dinf, dtri, min(dinf, dtri)
        return None, dtri, dtri

    def threshold_tri(self) -> float:
        """Triangle threshold at the current level (k >= 1)."""
        k = self.k
        if k < 1:
            raise ValueError("tracker must be advanced before reading thresholds")
        state_term = self._row_norm[k - 1]
        w_term = (self._cum_w[k - 2] if k >= 2 else 0.0) + self._nw_last
        if k == 1:
            v_term = self._nv0_at_k1 + self._nv_last
        else:
            v_term = (
                self._bev1_norm[k - 2]
                + (self._cum_mv[k - 3] if k >= 3 else 0.0)
                + self._nv_prev
                + self._nv_last
            )
        return self.delta_x0 * state_term + self.eta_w * w_term + self.eta_v * v_term

    def stacked(self) -> StackedResidualModel:
        """Assemble the stacked residual map at the current level (k <= cutoff)."""
        k = self.k
        if k < 1:
            raise ValueError("tracker must be advanced before assembling the stacked map")
        if k > self.k_inf_cutoff:
            raise ValueError(
                f"stacked map not retained past k_inf_cutoff={self.k_inf_cutoff} (k={k})"
            )
        if k == 1:
            blocks = [self._rows[0], self._w_last, self._v0_at_k1, self._v_last]
        else:
            blocks = [self._rows[k - 1]]
            blocks.extend(self._wprod[k - 2 - i] for i in range(k - 1))
            blocks.append(self._w_last)
            blocks.append(self._bprod[k - 2])
            blocks.extend(self._mvprod[k - 2 - i] for i in range(1, k - 1))
            blocks.append(self._v_prev)
            blocks.append(self._v_last)
        A = np.hstack(blocks)
        n, l = self._n, self._l
        bounds = np.concatenate(
            [
                np.full(n, self.delta_x0),
                np.full(n * k, self.eta_w),
                np.full(l * (k + 1), self.eta_v),
            ]
        )
        return StackedResidualModel(k=k, n=n, l=l, Aq_k=A, bounds=bounds)


# ---------------------------------------------------------------- thresholds


def build_stacked(
    errdyn: ErrorDynamics,
    dec: ModeDecomposition,
    k: int,
    delta_x0: float = 0.0,
    eta_w: float = 0.0,
    eta_v: float = 0.0,
) -> StackedResidualModel:
    """Stacked residual map at level k >= 1 (stateless convenience wrapper)."""
    k = int(k)
    if k < 1:
        raise ValueError("stacked residual map starts at k = 1")
    tracker = ThresholdTracker(
        errdyn, dec, eta_w=eta_w, eta_v=eta_v, delta_x0=delta_x0, k_inf_cutoff=k
    )
    for _ in range(k):
        tracker.k += 1
        tracker._append_power()
    return tracker.stacked()


def threshold_inf(sm: StackedResidualModel, enum_budget: int = 16) -> float:
    """Upper bound on max ||Aq_k t||_2 over the bounding hypercube.

    Exact for a single-row map (weighted absolute sum) and under exact
    vertex enumeration when the column count fits the budget; otherwise the
    row-wise relaxation ||abs(A) @ bounds||_2, which over-approximates the
    vertex maximum and therefore stays a sound elimination threshold.
    """
    A = sm.Aq_k
    b = sm.bounds
    rows, cols = A.shape
    if rows == 0 or cols == 0:
        return 0.0
    if rows == 1:
        return float(np.abs(A[0]) @ b)
    if cols <= enum_budget:
        # symmetry: fix the first coordinate's sign
        count = 1 << (cols - 1)
        idx = np.arange(count, dtype=np.uint64)[:, None]
        shifts = np.arange(cols - 1, dtype=np.uint64)[None, :]
        signs = np.ones((count, cols))
        signs[:, 1:] = 1.0 - 2.0 * ((idx >> shifts) & np.uint64(1))
        verts = signs * b
        vals = np.einsum("rc,vc->vr", A, verts)
        return float(np.sqrt(np.max(np.sum(vals * vals, axis=1))))
    return float(np.linalg.norm(np.abs(A) @ b))


def threshold_tri(
    errdyn: ErrorDynamics,
    dec: ModeDecomposition,
    k: int,
    eta_w: float,
    eta_v: float,
    delta_x0: float,
) -> float:
    """Triangle threshold at level k >= 1 (stateless convenience wrapper)."""
    k = int(k)
    if k < 1:
        raise ValueError("triangle threshold starts at k = 1")
    tracker = ThresholdTracker(
        errdyn, dec, eta_w=eta_w, eta_v=eta_v, delta_x0=delta_x0, k_inf_cutoff=0
    )
    for _ in range(k):
        tracker.k += 1
        tracker._append_power()
    return tracker.threshold_tri()


def tri_limit(errdyn: ErrorDynamics, dec: ModeDecomposition, eta_w: float, eta_v: float) -> float:
    """Closed-form limit of the triangle threshold as k grows (needs theta < 1).

    Geometric-series bound on the two norm sums; for scalar systems every
    norm is multiplicative and the value is the exact series limit.
    """
    theta = errdyn.theta
    if theta >= 1.0:
        raise DivergenceError(
            f"triangle threshold has no finite limit: theta = ||Ae||_2 = {theta:.6f} >= 1"
        )
    C2 = dec.C2
    C2A = C2 @ errdyn.Abar
    C2AAe = C2A @ errdyn.Ae
    Mv = errdyn.Bev1 + errdyn.Ae @ errdyn.Bev2
    s_w = _norm2(C2A @ errdyn.Bew) + _norm2(C2AAe) * _norm2(errdyn.Bew) / (1.0 - theta)
    s_v = _norm2(C2A @ Mv) + _norm2(C2AAe) * _norm2(Mv) / (1.0 - theta)
    return eta_w * (_norm2(C2 @ errdyn.Bew_star) + s_w) + eta_v * (
        s_v
        + _norm2(C2 @ (errdyn.Bev1_star + errdyn.Abar @ errdyn.Bev2))
        + _norm2(C2 @ errdyn.Bev2_star + dec.T2)
    )


def eta_t(k: int, n: int, l: int, delta_x0: float, eta_w: float, eta_v: float) -> float:
    """2-norm of any vertex of the level-k bounding hypercube."""
    k = int(k)
    if k < 0:
        raise ValueError("k must be nonnegative")
    return math.sqrt(
        n * delta_x0 * delta_x0 + k * n * eta_w * eta_w + (k + 1) * l * eta_v * eta_v
    )


# --------------------------------------------------------------- elimination


def eliminate(r_norm: float, delta_hat: float) -> bool:
    """True iff the measured residual norm strictly exceeds the threshold.

    A machine-noise guard (1e-14 relative to the threshold scale) keeps
    rounding dust from deciding: a mode whose residual map is identically
    zero — full attack absorption makes every stacked block vanish, so both
    the residual and its threshold are exactly zero in exact arithmetic —
    must not be rejected over a 1e-19 floating-point leftover.  Any genuine
    crossing clears the guard by many orders of magnitude.
    """
    r_norm = float(r_norm)
    delta_hat = float(delta_hat)
    if r_norm < 0 or delta_hat < 0:
        raise ValueError("residual norm and threshold must be nonnegative")
    return r_norm > delta_hat + 1e-14 * (1.0 + delta_hat)


def fuse(active, estimates) -> GlobalEstimate:
    """Combine the surviving modes' balls into the global set estimate.

    ``active`` is an iterable of surviving mode ids, ``estimates`` a mapping
    from mode id to its ``(state_ball, input_ball)`` pair.  The union is
    kept as the explicit list of balls — no convex hull, no deduplication.
    An empty survivor set raises :class:`AllModesEliminatedError`.
    """
    ids = tuple(int(q) for q in active)
    if not ids:
        raise AllModesEliminatedError(
            "every mode hypothesis was eliminated; since the true mode cannot "
            "trip its own threshold, the configuration violates an assumption "
            "(mode family, noise bounds, or data consistency)"
        )
    state_balls = []
    input_balls = []
    for q in ids:
        xb, db = estimates[q]
        state_balls.append(xb)
        input_balls.append(db)
    return GlobalEstimate(
        active=ids, state_balls=tuple(state_balls), input_balls=tuple(input_balls)
    )


# ------------------------------------------------------------- detectability


def detectability_report(
    model: SystemModel, entries, R_x: float | None = None, R_y: float | None = None
) -> DetectabilityReport:
    """Offline mode-distinguishability certificates over all ordered pairs.

    ``entries`` is a sequence of ``(mode, decomposition, errdyn)`` triples.
    Condition (i) compares sigma_min of the pair's difference matrix W
    against the ratio built from the asymptotic triangle thresholds, with
    the output-rotation bound ``R_z = R_y * ||T2_q - T2_q'||_2`` standing in
    for the otherwise-undefined numerator constant (noted in the report);
    pairs whose residual dimensions differ have no W and no condition (i).
    It needs the trajectory bounds ``R_x``/``R_y``; leave them None to skip
    condition (i) entirely (sigma_min is still reported).  Condition (ii)
    asks for pairwise distinct residual subspaces (projector distance above
    1e-8; dimension-mismatched pairs are distinct outright) and needs no
    bounds.  Self-pairs are listed for completeness and ignored by both
    verdicts.
    """
    have_bounds = R_x is not None and R_y is not None
    if have_bounds:
        R_x = float(R_x)
        R_y = float(R_y)
    limits = {}
    for mode, dec, dyn in entries:
        try:
            limits[mode.id] = tri_limit(dyn, dec, model.eta_w, model.eta_v)
        except DivergenceError:
            limits[mode.id] = math.inf
    denom = math.sqrt(R_x * R_x + model.eta_v**2) if have_bounds else None
    pairs = []
    for mode_q, dec_q, _dyn_q in entries:
        for mode_p, dec_p, _dyn_p in entries:
            matched = dec_q.residual_dim == dec_p.residual_dim
            W = None
            sigma_min = None
            ratio = None
            cond_i = None
            if matched:
                r = dec_q.residual_dim
                W = np.hstack(
                    [
                        dec_q.C2 - dec_p.C2,
                        dec_q.T2 - dec_p.T2,
                        -np.eye(r),
                        np.eye(r),
                        dec_q.D2,
                        -dec_p.D2,
                    ]
                )
                sv = np.linalg.svd(W, compute_uv=False)
                sigma_min = float(sv[-1]) if sv.size else 0.0
                if have_bounds:
                    R_z = R_y * _norm2(dec_q.T2 - dec_p.T2)
                    num = limits[mode_q.id] + limits[mode_p.id] + R_z
                    ratio = num / denom if denom > 0 else math.inf
                    cond_i = sigma_min > ratio
            if matched:
                proj_gap = _norm2(dec_q.T2.T @ dec_q.T2 - dec_p.T2.T @ dec_p.T2)
                cond_ii = proj_gap > 1e-8
            else:
                cond_ii = True
            pairs.append(
                PairRecord(
                    q=mode_q.id,
                    q_prime=mode_p.id,
                    dimension_matched=matched,
                    W=W,
                    sigma_min=sigma_min,
                    threshold_ratio=ratio,
                    condition_i=cond_i,
                    condition_ii=cond_ii,
                )
            )
    off_diag = [p for p in pairs if p.q != p.q_prime]
    overall_i = (
        have_bounds
        and bool(off_diag)
        and all(p.condition_i is True for p in off_diag)
    )
    overall_ii = bool(off_diag) and all(p.condition_ii for p in off_diag)
    if have_bounds:
        note = (
            "condition (i) numerator uses the output-rotation bound "
            "R_z = R_y * ||T2_q - T2_q'||_2"
        )
    else:
        note = "condition (i) not evaluated (trajectory bounds R_x/R_y not supplied)"
    return DetectabilityReport(
        pairs=tuple(pairs),
        overall_condition_i=overall_i,
        overall_condition_ii=overall_ii,
        certified=overall_i or overall_ii,
        note=note,
    )


# ------------------------------------------------- general stacked residual


def stacked_residual_general(
    dec_q: ModeDecomposition,
    errdyn_q: ErrorDynamics,
    dec_qstar: ModeDecomposition,
    model: SystemModel,
    k: int,
):
    """Stacked maps describing mode q's residual when the true mode is q*.

    Returns ``(T, B, D)`` with the exact identity

        r_q(k) = T @ [e0; w_0..w_{k-1}; v_0..v_k]
               + B @ [du_0; ...; du_k]
               + D @ [d_0; ...; d_k]

    where ``e0`` is the mode-q observer's initial error, ``du_j`` is the
    difference between the input driving the plant (mode q*'s) and the one
    fed to the q observer, and ``d_j`` is the true attack in mode q*'s
    channel convention.  The construction substitutes the true plant into
    the mode-q error recursion: attack and input mismatch enter exactly
    like process noise (through G*, B) and measurement noise (through H*,
    D), so T is the ordinary stacked map of mode q and B/D reuse its noise
    blocks.  With q = q* the attack map D vanishes identically.
    """
    if dec_q.residual_dim != dec_qstar.residual_dim:
        raise UnsupportedPairError(
            f"residual dimensions differ ({dec_q.residual_dim} vs {dec_qstar.residual_dim})"
        )
    k = int(k)
    if k < 1:
        raise ValueError("stacked residual maps start at k = 1")
    sm = build_stacked(errdyn_q, dec_q, k)
    T = sm.Aq_k
    n, l = sm.n, sm.l
    # reconstruct the true mode's attack matrices from its frame
    Gstar = dec_qstar.G1 @ dec_qstar.V1.T + dec_qstar.G2 @ dec_qstar.V2.T
    Hstar = dec_qstar.T1.T @ dec_qstar.Sigma @ dec_qstar.V1.T
    wblk = [T[:, n + j * n : n + (j + 1) * n] for j in range(k)]
    voff = n * (k + 1)
    vblk = [T[:, voff + j * l : voff + (j + 1) * l] for j in range(k + 1)]
    dblocks = [wblk[j] @ Gstar + vblk[j] @ Hstar for j in range(k)]
    dblocks.append(vblk[k] @ Hstar)
    bblocks = [wblk[j] @ model.B + vblk[j] @ model.D for j in range(k)]
    bblocks.append(vblk[k] @ model.D)
    return T, np.hstack(bblocks), np.hstack(dblocks)
