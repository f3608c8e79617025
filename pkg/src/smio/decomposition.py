"""Per-mode output/input decomposition, observer gains, and error dynamics.

For a hypothesis with attack matrices ``(Gq, Hq)`` the estimator needs a
rotated coordinate frame: the output directions that carry direct sensor
attack (``T1``) get inverted away, the remaining directions (``T2``) carry
an attack-free residual, and the attack space splits accordingly into a
part visible in the output (``V1``) and a part acting only through the
state (``V2``).  The frame comes from the SVD of ``Hq`` with a fixed sign
convention so traces are reproducible across platforms.  On top of the
frame sit the observer gains (``M1``, ``M2``, ``Ltilde``) and the closed
matrices of the estimation-error recursion.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_discrete_are

from .model import ModeHypothesis, SystemModel

__all__ = [
    "ModeDecomposition",
    "ObserverGains",
    "ErrorDynamics",
    "DecompositionError",
    "RankAmbiguityError",
    "InfeasibleModeError",
    "SynthesisError",
    "ConservativeRadiusWarning",
    "decompose_mode",
    "synthesize_gains",
    "error_dynamics",
]


class DecompositionError(ValueError):
    """Mode decomposition or gain synthesis failed."""


class RankAmbiguityError(DecompositionError):
    """The numerical rank of Hq is not decidable at working precision."""


class InfeasibleModeError(DecompositionError):
    """The mode violates the algebraic existence conditions for the observer."""


class SynthesisError(DecompositionError):
    """No stabilizing innovation gain was found (or an override was rejected)."""

    def __init__(self, message: str, radius: float | None = None):
        super().__init__(message)
        self.radius = radius


class ConservativeRadiusWarning(UserWarning):
    """The error map is stable but norm-expansive: ||Ae||_2 >= 1 > spectral radius.

    The per-step radius recursion contracts in norm, so its bounds grow
    transiently (possibly for a long time) even though the true estimation
    error stays bounded.
    """


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ModeDecomposition:
    """Rotated output/input frame for one mode.

    Rows of ``[T1; T2]`` are an orthonormal output basis with ``T2 @ Hq = 0``;
    columns of ``[V1 V2]`` are an orthonormal attack basis with
    ``T1 @ Hq @ V1 = Sigma`` (invertible diagonal) and ``T1 @ Hq @ V2 = 0``.
    The derived products ``C1, C2, D1, D2, G1, G2`` are stored so downstream
    code never recomputes them inconsistently.
    """

    p_H: int
    T1: np.ndarray = field(repr=False)
    T2: np.ndarray = field(repr=False)
    Sigma: np.ndarray = field(repr=False)
    V1: np.ndarray = field(repr=False)
    V2: np.ndarray = field(repr=False)
    C1: np.ndarray = field(repr=False)
    C2: np.ndarray = field(repr=False)
    D1: np.ndarray = field(repr=False)
    D2: np.ndarray = field(repr=False)
    G1: np.ndarray = field(repr=False)
    G2: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        for name in ("T1", "T2", "Sigma", "V1", "V2", "C1", "C2", "D1", "D2", "G1", "G2"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def residual_dim(self) -> int:
        """Number of attack-free output directions (rows of T2)."""
        return self.T2.shape[0]


@dataclass(frozen=True, eq=False)
class ObserverGains:
    """Inversion gains M1 (output-visible attack) and M2 (state-side attack),
    plus the innovation gain Ltilde of the final correction step."""

    M1: np.ndarray = field(repr=False)
    M2: np.ndarray = field(repr=False)
    Ltilde: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        for name in ("M1", "M2", "Ltilde"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))


@dataclass(frozen=True, eq=False)
class ErrorDynamics:
    """Closed matrices of the estimation-error recursion.

    ``Abar`` propagates the pre-correction error, ``Ae`` the corrected one;
    the ``B``-matrices map process noise (w) and the two measurement-noise
    entry points (v at the previous and current step) into the error.
    Starred variants describe the pre-correction (measurement-updated but
    not innovation-corrected) error.  ``theta`` is the 2-norm of ``Ae``.
    """

    Abar: np.ndarray = field(repr=False)
    Ae: np.ndarray = field(repr=False)
    Bew_star: np.ndarray = field(repr=False)
    Bev1_star: np.ndarray = field(repr=False)
    Bev2_star: np.ndarray = field(repr=False)
    Bew: np.ndarray = field(repr=False)
    Bev1: np.ndarray = field(repr=False)
    Bev2: np.ndarray = field(repr=False)
    theta: float

    def __post_init__(self) -> None:
        for name in ("Abar", "Ae", "Bew_star", "Bev1_star", "Bev2_star", "Bew", "Bev1", "Bev2"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.Ae)))) if self.Ae.size else 0.0


def decompose_mode(model: SystemModel, mode: ModeHypothesis) -> ModeDecomposition:
    """Build the rotated frame for one mode from the SVD of its Hq.

    Signs are normalized (largest-magnitude entry of every left singular
    vector made positive, with the paired right vector flipped along) so the
    frame is deterministic across BLAS implementations.  Raises
    :class:`RankAmbiguityError` when any singular value sits within a factor
    1e3 of the rank cutoff — a silently misidentified rank would corrupt
    every downstream matrix.
    """
    Hq = mode.Hq
    ell, rho = Hq.shape
    U, sv, Vt = np.linalg.svd(Hq, full_matrices=True)
    U = U.copy()
    Vt = Vt.copy()
    smax = float(sv[0]) if sv.size else 0.0
    cutoff = max(ell, rho) * np.finfo(float).eps * smax
    ambiguous = [s for s in sv if cutoff / 1e3 < s <= cutoff * 1e3]
    if ambiguous:
        raise RankAmbiguityError(
            "numerical rank of Hq is ambiguous: singular value(s) "
            + ", ".join(f"{s:.6e}" for s in ambiguous)
            + f" lie within a factor 1e3 of the cutoff {cutoff:.6e}"
        )
    p_H = int(np.sum(sv > cutoff))

    # deterministic signs: dominant entry of each output direction positive
    for i in range(U.shape[1]):
        col = U[:, i]
        if col[np.argmax(np.abs(col))] < 0:
            U[:, i] = -col
            if i < p_H:
                Vt[i, :] = -Vt[i, :]
    for i in range(p_H, Vt.shape[0]):
        row = Vt[i, :]
        if row.size and row[np.argmax(np.abs(row))] < 0:
            Vt[i, :] = -row

    T1 = U[:, :p_H].T
    T2 = U[:, p_H:].T
    V1 = Vt[:p_H].T
    V2 = Vt[p_H:].T
    return ModeDecomposition(
        p_H=p_H,
        T1=T1,
        T2=T2,
        Sigma=np.diag(sv[:p_H]),
        V1=V1,
        V2=V2,
        C1=T1 @ model.C,
        C2=T2 @ model.C,
        D1=T1 @ model.D,
        D2=T2 @ model.D,
        G1=mode.Gq @ V1,
        G2=mode.Gq @ V2,
    )


def _phi(dec: ModeDecomposition, M2: np.ndarray, n: int) -> np.ndarray:
    return np.eye(n) - dec.G2 @ M2 @ dec.C2


def _abar(dec: ModeDecomposition, M1: np.ndarray, M2: np.ndarray, model: SystemModel) -> np.ndarray:
    At = model.A - dec.G1 @ M1 @ dec.C1
    return _phi(dec, M2, model.n) @ At


def _m1_m2(dec: ModeDecomposition) -> tuple[np.ndarray, np.ndarray]:
    diag = np.diag(dec.Sigma) if dec.p_H else np.zeros(0)
    M1 = np.diag(1.0 / diag) if dec.p_H else np.zeros((0, 0))
    C2G2 = dec.C2 @ dec.G2
    width = C2G2.shape[1]
    if width:
        sv = np.linalg.svd(C2G2, compute_uv=False)
        tol = max(C2G2.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
        if sv.size < width or sv[-1] <= tol:
            raise InfeasibleModeError(
                "C2*G2 is column-rank deficient "
                f"(shape {C2G2.shape}, singular values {np.array2string(sv, precision=3)}); "
                "the state-side attack component cannot be recovered from the residual outputs"
            )
    M2 = np.linalg.pinv(C2G2)
    return M1, M2


def synthesize_gains(
    dec: ModeDecomposition,
    model: SystemModel,
    override: np.ndarray | None = None,
) -> ObserverGains:
    """Gains satisfying M1 Sigma = I and M2 C2 G2 = I, plus a stabilizing Ltilde.

    The default innovation gain solves the discrete algebraic Riccati
    equation for (Abar^T, C2^T) with identity weights — a standard
    stabilizing choice; everything downstream (thresholds, radii) is built
    from the actual closed-loop matrices, so any stable gain is sound.  An
    ``override`` gain is accepted only after its closed-loop spectral radius
    checks out, and rejected with the computed radius otherwise.
    """
    M1, M2 = _m1_m2(dec)
    Abar = _abar(dec, M1, M2, model)
    n = model.n
    rdim = dec.C2.shape[0]

    if override is not None:
        Lt = np.asarray(override, dtype=float)
        if Lt.shape != (n, rdim):
            raise SynthesisError(
                f"override gain must have shape ({n}, {rdim}); got {Lt.shape}"
            )
        Ae = (np.eye(n) - Lt @ dec.C2) @ Abar
        radius = float(np.max(np.abs(np.linalg.eigvals(Ae)))) if n else 0.0
        if radius >= 1.0:
            raise SynthesisError(
                f"override gain rejected: closed-loop spectral radius {radius:.6f} >= 1",
                radius=radius,
            )
        return ObserverGains(M1=M1, M2=M2, Ltilde=Lt)

    if rdim == 0:
        # no residual outputs to correct with; the open map must already be stable
        radius = float(np.max(np.abs(np.linalg.eigvals(Abar)))) if n else 0.0
        if radius >= 1.0:
            raise SynthesisError(
                "mode has no attack-free output direction and its open error map "
                f"is unstable (spectral radius {radius:.6f})",
                radius=radius,
            )
        return ObserverGains(M1=M1, M2=M2, Ltilde=np.zeros((n, 0)))

    try:
        P = solve_discrete_are(Abar.T, dec.C2.T, np.eye(n), np.eye(rdim))
    except Exception as exc:
        raise SynthesisError(f"Riccati synthesis failed: {exc}") from exc
    S = dec.C2 @ P @ dec.C2.T + np.eye(rdim)
    Lt = P @ dec.C2.T @ np.linalg.inv(S)
    Ae = (np.eye(n) - Lt @ dec.C2) @ Abar
    radius = float(np.max(np.abs(np.linalg.eigvals(Ae))))
    if radius >= 1.0:
        raise SynthesisError(
            f"Riccati gain failed to stabilize: spectral radius {radius:.6f} >= 1",
            radius=radius,
        )
    return ObserverGains(M1=M1, M2=M2, Ltilde=Lt)


def error_dynamics(
    dec: ModeDecomposition, gains: ObserverGains, model: SystemModel
) -> ErrorDynamics:
    """Assemble the closed error-recursion matrices for one mode.

    Emits :class:`ConservativeRadiusWarning` when the map is stable in
    spectral radius but expansive in 2-norm (theta >= 1), because the
    norm-based radius recursion then grows without reflecting the true
    error.
    """
    n = model.n
    Phi = _phi(dec, gains.M2, n)
    At = model.A - dec.G1 @ gains.M1 @ dec.C1
    Abar = Phi @ At
    IL = np.eye(n) - gains.Ltilde @ dec.C2
    Ae = IL @ Abar
    Bew_star = Phi
    Bev1_star = -Phi @ (dec.G1 @ gains.M1 @ dec.T1)
    Bev2_star = -dec.G2 @ gains.M2 @ dec.T2
    dyn = ErrorDynamics(
        Abar=Abar,
        Ae=Ae,
        Bew_star=Bew_star,
        Bev1_star=Bev1_star,
        Bev2_star=Bev2_star,
        Bew=IL @ Bew_star,
        Bev1=IL @ Bev1_star,
        Bev2=IL @ Bev2_star - gains.Ltilde @ dec.T2,
        theta=float(np.linalg.norm(Ae, 2)) if Ae.size else 0.0,
    )
    if dyn.theta >= 1.0 > dyn.spectral_radius:
        warnings.warn(
            f"error map is stable (spectral radius {dyn.spectral_radius:.4f}) but "
            f"norm-expansive (theta = {dyn.theta:.4f} >= 1): the per-step error "
            "radius will grow transiently and its recursion never contracts",
            ConservativeRadiusWarning,
            stacklevel=2,
        )
    return dyn
