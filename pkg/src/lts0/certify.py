"""Post-hoc stability certification and diagnostic constants.

Everything here is oracle-side: functions take the true system (or its
:class:`~lts0.spectral.SpectralData`) alongside a learned model and report
how the learned controller behaves on it.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import lambertw

from . import _kernels
from .errors import (
    DimensionMismatch,
    InfeasibleEpsilons,
    RankDeficient,
    TooLarge,
    ZeroGap,
    ZeroState,
)
from .learner import LearnedModel, Lts0Params
from .linalg import as_matrix, matrix_power, operator_norm, sigma_min, spectral_radius, vector_norm
from .plant import LinearSystem
from .rng import TAG_CERTIFY, Stream
from .spectral import ChiConstant, SpectralData, chi_constant, gelfand_constant
from .tolerances import TOL

__all__ = [
    "CertificateReport",
    "StabilityVerdict",
    "ConstraintReport",
    "closed_loop_hat_L",
    "certify_stability",
    "theorem_constraints",
    "choose_epsilons",
    "vandermonde_projector_oracle",
    "unstable_ratio",
]


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# closed loop in y-coordinates


@dataclass(frozen=True)
class CertificateReport:
    """Closed-loop tau-hop matrix of a learned controller in y-coordinates.

    Attributes
    ----------
    L_hat : ndarray, shape (n, n)
        ``P^T (A^tau + A^(tau-1) B K_hat) P``.
    block_norms : dict
        Spectral norms of the ``top_left``, ``top_right``, ``bottom_left``
        and ``bottom_right`` blocks.
    rho_closed : float
        Spectral radius of ``L_hat``.
    rho_x_closed : float
        Spectral radius of the same closed loop in x-coordinates.
    rho_blockdiag : float
        Spectral radius with the off-diagonal blocks removed.
    stable : bool
        ``rho_closed < 1``.
    chi : ChiConstant or None
        ``None`` when the diagonal blocks share an eigenvalue.
    lemma1_bound : float
        ``chi * ||top_right|| * ||bottom_left||`` (``inf`` without ``chi``).
    lemma1_holds : bool
        ``|rho_closed - rho_blockdiag| <= lemma1_bound``.
    tau : int
    """

    L_hat: np.ndarray
    block_norms: dict
    rho_closed: float
    rho_x_closed: float
    rho_blockdiag: float
    stable: bool
    chi: ChiConstant | None
    lemma1_bound: float
    lemma1_holds: bool
    tau: int
    k: int

    def block(self, name: str) -> np.ndarray:
        k = self.k
        L = self.L_hat
        return {
            "top_left": L[:k, :k],
            "top_right": L[:k, k:],
            "bottom_left": L[k:, :k],
            "bottom_right": L[k:, k:],
        }[name]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["chi"] = None if self.chi is None else asdict(self.chi)
        return _jsonable(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _padded_gain(K_hat: np.ndarray, m: int) -> np.ndarray:
    K_hat = as_matrix(K_hat, "K_hat")
    if K_hat.shape[0] > m:
        raise DimensionMismatch(f"gain has {K_hat.shape[0]} rows but the plant has {m} inputs")
    out = np.zeros((m, K_hat.shape[1]))
    out[: K_hat.shape[0]] = K_hat
    return out


def closed_loop_hat_L(spec: SpectralData, sys: LinearSystem, model: LearnedModel,
                      tau: int | None = None) -> CertificateReport:
    """Assemble the learned tau-hop closed loop in the orthogonal basis.

    Parameters
    ----------
    spec : SpectralData
        Decomposition of the true ``A``.
    sys : LinearSystem
    model : LearnedModel
    tau : int, optional
        Defaults to ``model.tau``.

    Raises
    ------
    DimensionMismatch
    """
    tau = model.tau if tau is None else int(tau)
    A, B = sys.A, sys.B
    n, k = sys.n, spec.k
    if spec.n != n or model.K_hat.shape[1] != n:
        raise DimensionMismatch("model, spectral data and system disagree on n")
    if model.K_hat.shape[0] != k:
        raise DimensionMismatch(f"gain has {model.K_hat.shape[0]} rows, expected k={k}")
    K = _padded_gain(model.K_hat, sys.m)
    A_pre = matrix_power(A, tau - 1)
    closed_x = A_pre @ A + A_pre @ B @ K
    P = spec.P
    L = P.T @ closed_x @ P
    norms = {
        "top_left": operator_norm(L[:k, :k]),
        "top_right": operator_norm(L[:k, k:]),
        "bottom_left": operator_norm(L[k:, :k]),
        "bottom_right": operator_norm(L[k:, k:]),
    }
    rho = spectral_radius(L)
    rho_x = spectral_radius(closed_x)
    diag = np.zeros_like(L)
    diag[:k, :k] = L[:k, :k]
    diag[k:, k:] = L[k:, k:]
    rho_diag = spectral_radius(diag)
    try:
        chi = chi_constant(diag, L - diag, k)
        bound = chi.bound if np.isfinite(chi.bound) else float("inf")
    except ZeroGap:
        chi = None
        bound = float("inf")
    # rounding slack scaled by the matrix size
    slack = 1e-9 * max(1.0, operator_norm(L))
    holds = bool(abs(rho - rho_diag) <= bound + slack)
    return CertificateReport(
        L_hat=L, block_norms=norms, rho_closed=rho, rho_x_closed=rho_x,
        rho_blockdiag=rho_diag, stable=bool(rho < 1.0), chi=chi,
        lemma1_bound=float(bound), lemma1_holds=holds, tau=tau, k=k,
    )


# ---------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class StabilityVerdict:
    """Outcome of :func:`certify_stability`.

    Attributes
    ----------
    rho : float
        Spectral radius of ``A^tau + A^(tau-1) B K``.
    status : str
        ``"stable"``, ``"marginal"`` or ``"unstable"``.
    stable : bool
        ``status == "stable"``.
    decay_confirmed : bool
        Every simulated start shrank below ``decay_target`` of its initial
        norm within ``hops`` hops. Diagnostic only: a stable loop with
        ``rho`` close to one may need more hops.
    worst_log10_ratio : float
        Largest ``log10(||x_final|| / ||x_0||)`` over the starts.
    hops, starts, tau : int
    """

    rho: float
    status: str
    stable: bool
    decay_confirmed: bool
    worst_log10_ratio: float
    hops: int
    starts: int
    tau: int

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def certify_stability(sys: LinearSystem, K_hat, tau: int, seed: int = 0, hops: int = 200,
                      starts: int = 5, decay_target: float = 1e-6) -> StabilityVerdict:
    """Spectral-radius verdict for a tau-hop gain, with a simulated cross-check.

    The closed loop ``A^tau + A^(tau-1) B K`` is stable when its spectral
    radius is below ``1 - TOL.stability`` and marginal within that distance
    of one. Unit starts are drawn from the certification substream of
    ``seed`` and propagated in log space so neither decay nor growth
    underflows.

    Parameters
    ----------
    sys : LinearSystem
    K_hat : array_like, shape (k, n) or (m, n)
        Rows beyond the gain's height act on unused inputs and are zero.
    tau : int
    """
    if tau < 1:
        raise ValueError("tau must be at least 1")
    K = _padded_gain(K_hat, sys.m)
    A_pre = matrix_power(sys.A, tau - 1)
    closed = A_pre @ sys.A + A_pre @ sys.B @ K
    rho = spectral_radius(closed)
    if rho < 1.0 - TOL.stability:
        status = "stable"
    elif rho <= 1.0 + TOL.stability:
        status = "marginal"
    else:
        status = "unstable"
    stream = Stream(seed, TAG_CERTIFY)
    worst = -np.inf
    for _ in range(starts):
        x = stream.normal(sys.n)
        x /= np.linalg.norm(x)
        log_norm = 0.0
        for _ in range(hops):
            x = closed @ x
            nrm = vector_norm(x)
            if nrm == 0.0:
                log_norm = -np.inf
                break
            log_norm += math.log10(nrm)
            x /= nrm
        worst = max(worst, log_norm)
    decayed = bool(worst < math.log10(decay_target))
    return StabilityVerdict(
        rho=rho, status=status, stable=status == "stable", decay_confirmed=decayed,
        worst_log10_ratio=float(worst), hops=int(hops), starts=int(starts), tau=int(tau),
    )


# ---------------------------------------------------------------------------
# constraint diagnostics


@dataclass(frozen=True)
class ConstraintReport:
    """Evaluated constants and right-hand sides of the parameter constraints.

    Floors are reported as real numbers ``f`` meaning ``param > f``;
    ceilings ``c`` mean ``param < c``. ``satisfied`` evaluates each
    inequality at the chosen parameters, with ``delta`` replaced by the
    realized projector error of the model.
    """

    epsilons: tuple
    side_condition: bool
    zeta: dict
    zeta_bar: float
    c: float
    xi: float
    gamma: float
    C_Delta: float
    C_B: float
    C_K: float
    C_gamma: float
    gamma_omega: float
    chi: float
    tau_floors: dict
    tau_floor: float
    alpha_ceiling: float
    delta_ceilings: dict
    delta_ceiling: float
    omega_floor: float
    realized_delta: float
    params: dict
    satisfied: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def choose_epsilons(l1: float, lk: float, lk1: float, max_halvings: int = 60) -> tuple:
    """Pick ``(eps1, eps2, eps3)`` meeting the feasibility conditions.

    The conditions are ``lk1 + eps2 < 1``, ``eps3 lk < 1`` and
    ``(l1 + eps1)^2 (lk1 + eps2) < lk / (1 + eps3 lk)``. Each epsilon is a
    fraction ``s`` of its own slack, with ``s`` halved from one half until
    all three hold.

    Raises
    ------
    InfeasibleEpsilons
    """
    s = 0.5
    for _ in range(max_halvings):
        e2 = s * (1.0 - lk1)
        e3 = s / lk
        room = lk / ((1.0 + e3 * lk) * (lk1 + e2))
        e1 = s * (math.sqrt(room) - l1) if room > l1 * l1 else -1.0
        if e1 > 0 and e2 > 0 and lk1 + e2 < 1 and e3 * lk < 1:
            if (l1 + e1) ** 2 * (lk1 + e2) < lk / (1.0 + e3 * lk):
                return (e1, e2, e3)
        s *= 0.5
    raise InfeasibleEpsilons(
        f"no epsilons satisfy the feasibility conditions (|l1|={l1:.4g}, |lk|={lk:.4g}, |lk+1|={lk1:.4g})"
    )


def _fallback_epsilons(lk: float, lk1: float) -> tuple:
    # side condition fails: keep the two satisfiable conditions and a small eps1
    return (1e-3, 0.5 * (1.0 - lk1), 0.5 / lk)


def _lambert_floor(log_a: float, threshold: float) -> float:
    """Real ``x`` beyond which ``a^x / x > threshold`` on the increasing branch."""
    # a^x / x has its minimum e log a at x = 1 / log a
    if threshold <= math.e * log_a:
        return -math.inf
    w = lambertw(-log_a / threshold, -1)
    return float(-w.real / log_a)


def _safe_log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _ratio_floor(num: float, den: float) -> float:
    """``log(num) / log(den)`` with the edge cases mapped to no-constraint or infinity."""
    ln = _safe_log(num)
    ld = _safe_log(den)
    if ld == 0.0 or not math.isfinite(ld):
        return math.inf if ln != -math.inf else -math.inf
    return ln / ld


def theorem_constraints(spec: SpectralData, sys: LinearSystem, model: LearnedModel,
                        params: Lts0Params, gamma: float | None = None,
                        t_max: int = 200) -> ConstraintReport:
    """Evaluate the constants and parameter constraints of the general-case guarantee.

    Parameters
    ----------
    spec : SpectralData
        Decomposition of the true ``A`` (needs ``0 < k < n``).
    sys : LinearSystem
    model : LearnedModel
    params : Lts0Params
    gamma : float, optional
        Initial unstable-ratio level; defaults to half its admissible ceiling.
    t_max : int
        Horizon of the Gelfand sweeps.

    Raises
    ------
    InfeasibleEpsilons
        The side condition holds but no epsilon triple was found.
    DimensionMismatch
        If ``k`` is 0 or ``n``.
    """
    k, n = spec.k, spec.n
    if not 0 < k < n:
        raise DimensionMismatch(f"need 0 < k < n, got k={k}, n={n}")
    tau = int(model.tau)
    alpha = float(params.alpha)
    omega = int(params.omega)
    mod = spec.moduli
    l1, lk, lk1 = float(mod[0]), float(mod[k - 1]), float(mod[k])
    side = bool(l1 * l1 * lk1 < lk)
    if side:
        e1, e2, e3 = choose_epsilons(l1, lk, lk1)
    else:
        e1, e2, e3 = _fallback_epsilons(lk, lk1)

    A = sys.A
    B = sys.B[:, :k]
    nA = operator_norm(A)
    nB = operator_norm(B)
    N1_inv = np.linalg.inv(spec.N1)
    zeta = {
        "A": gelfand_constant(A, e1, t_max).value,
        "M1": gelfand_constant(spec.M1, e1, t_max).value,
        "M2": gelfand_constant(spec.M2, e2, t_max).value,
        "N2": gelfand_constant(spec.N2, e2, t_max).value,
        "N1_inv": gelfand_constant(N1_inv, e3, t_max).value,
    }
    zeta_bar = max(zeta["A"], zeta["M2"], zeta["N2"], zeta["N1_inv"])
    xi = float(spec.xi)
    c = sigma_min(spec.R1 @ B) / nB if nB > 0 else 0.0
    sq2xi = math.sqrt(2.0 * xi)

    L1 = l1 + e1
    L2 = lk1 + e2
    Lk = lk / (1.0 + e3 * lk)  # lower rate of N1 powers
    C_Delta = (zeta["M1"] * zeta["M2"] * (2.0 - xi) * sq2xi * nA / (1.0 - xi)
               * 2.0 * lk1 / (L1 - L2))
    C_B = 2.0 * math.sqrt(k) * zeta["A"] ** 2 * ((2 * tau + 2) * nA + nB) / alpha
    C_K = (4.0 * zeta["N1_inv"] * (zeta["M1"] * L1 + 2.0 * nA * zeta["A"]) / (c * nB)
           if c > 0 else math.inf)

    gamma_ceiling = min(0.5, 1.0 / (math.sqrt(2.0 / (sigma_min(spec.R1) * k)) + 1.0))
    gamma = 0.5 * gamma_ceiling if gamma is None else float(gamma)
    R2_norm = operator_norm(spec.R2)
    C_gamma = 1.0 / ((1.0 + 1.0 / gamma) * zeta["N1_inv"] * zeta["N2"] * R2_norm)
    rate = Lk / L2
    gamma_omega = C_gamma * rate ** omega

    cert = closed_loop_hat_L(spec, sys, model, tau)
    chi = cert.chi.chi if cert.chi is not None else math.nan

    # tau floors
    a = L1 * L1 / Lk
    tau1 = (_ratio_floor(c * (1 - xi) / (2 * sq2xi * zeta["N2"] * zeta["N1_inv"]), L2 / Lk) + 1.0
            if xi > 0 else -math.inf)
    # (1 / tau) a^(tau-1) > 2 ||A|| zeta_A^2  <=>  a^tau / tau > 2 a ||A|| zeta_A^2
    tau2 = _lambert_floor(math.log(a), 2.0 * a * nA * zeta["A"] ** 2)
    tau3 = _ratio_floor(1.0 / (4.0 * zeta["M2"]), L2)
    X4 = (C_Delta + 1.0) * zeta["M2"] * nB * C_K / L1
    b4 = L1 * L1 * L2 / Lk
    if side and math.isfinite(chi) and chi > 0:
        # 1/2 + chi X4 b4^(tau-1) < 1
        tau4 = 1.0 + _ratio_floor(1.0 / (2.0 * chi * X4), b4)
    elif side:
        tau4 = -math.inf
    else:
        tau4 = math.inf
    tau_floors = {"tau:1": tau1, "tau:2": tau2, "tau:3": tau3, "tau:4": tau4}

    alpha_ceiling = ((2.0 / 3.0 * sigma_min(spec.M1) - gamma * nA / (1.0 - xi))
                     / ((1.0 + sq2xi / (1.0 - xi) + gamma / (1.0 - xi)) * nB))

    delta_ceilings = {
        "delta:1": c * nB / (4.0 * zeta["N1_inv"] * C_B) * (Lk / L1) ** (tau - 1),
        "delta:2": 1.0 / (2.0 * (C_B * C_K + zeta["A"] * nB * C_K + 1.0)) * a ** (-(tau - 1)),
        "delta:3": 1.0 / (4.0 * zeta["M2"] * nB * C_K) * (L1 * L2 / Lk) ** (-(tau - 1)),
        "delta:4": L1 * L1 / (zeta["A"] * nB * C_K) * a ** (-tau),
        "delta:1/tau": 1.0 / tau,
    }

    log_rate = math.log(rate) if rate > 0 else -math.inf
    if log_rate > 0:
        w1 = math.log(2.0 / C_gamma) / log_rate
        w2 = ((_safe_log(2.0 * C_Delta / (C_gamma * params.delta)) + tau * math.log(L1)) / log_rate)
        omega_floor = max(w1, w2)
    else:
        omega_floor = math.inf

    realized = float(np.linalg.norm(model.Pi1_hat - spec.Pi1, 2))
    satisfied = {
        "side_condition": side,
        "tau:1": tau > tau1,
        "tau:2": (a ** (tau - 1)) / tau > 2.0 * nA * zeta["A"] ** 2,
        "tau:3": tau > tau3,
        "tau:4": tau > tau4,
        "alpha": alpha < alpha_ceiling,
        "delta": realized < min(delta_ceilings.values()),
        "omega": omega > omega_floor,
    }
    return ConstraintReport(
        epsilons=(e1, e2, e3), side_condition=side, zeta=zeta, zeta_bar=zeta_bar,
        c=c, xi=xi, gamma=gamma, C_Delta=C_Delta, C_B=C_B, C_K=C_K,
        C_gamma=C_gamma, gamma_omega=gamma_omega, chi=chi,
        tau_floors=tau_floors, tau_floor=max(tau_floors.values()),
        alpha_ceiling=alpha_ceiling, delta_ceilings=delta_ceilings,
        delta_ceiling=min(delta_ceilings.values()), omega_floor=omega_floor,
        realized_delta=realized, params=params.to_dict(),
        satisfied={key: bool(v) for key, v in satisfied.items()},
    )


# ---------------------------------------------------------------------------
# small-scale oracles


def _subsets(n: int, r: int) -> np.ndarray:
    combos = list(itertools.combinations(range(n), r))
    return np.array(combos, dtype=np.int64).reshape(len(combos), r)


def vandermonde_projector_oracle(lambdas, d, k: int) -> np.ndarray:
    """Closed-form projector onto ``span{d, Lambda d, ..., Lambda^(k-1) d}``.

    Works in the eigenbasis of a diagonal ``A = diag(lambdas)``: entry
    ``(u, v)`` is a ratio of sums over index subsets of products of
    ``d_i`` and eigenvalue differences.

    Parameters
    ----------
    lambdas : sequence of float
        Distinct real eigenvalues, ``n <= 10``.
    d : sequence of float
        Coordinates of the first state in the eigenbasis.
    k : int

    Raises
    ------
    TooLarge
        If ``n > 10`` or two eigenvalues coincide.
    RankDeficient
        If the window spans fewer than ``k`` dimensions.
    """
    lam = np.asarray(lambdas, dtype=float).reshape(-1)
    d = np.asarray(d, dtype=float).reshape(-1)
    n = lam.size
    if d.size != n:
        raise DimensionMismatch("lambdas and d differ in length")
    if n > 10:
        raise TooLarge(f"n={n} exceeds the combinatorial limit of 10")
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    gaps = np.abs(lam[:, None] - lam[None, :])[np.triu_indices(n, 1)]
    if gaps.size and gaps.min() <= 1e-12 * max(1.0, np.abs(lam).max()):
        raise TooLarge("eigenvalues must be distinct")
    sub_km1 = _subsets(n, k - 1)
    sub_k = _subsets(n, k)
    num, den = _kernels.vandermonde_sums(lam, d, sub_km1, sub_k)
    if not den > 0:
        raise RankDeficient("window has rank below k")
    return num / den


def unstable_ratio(spec: SpectralData, x) -> float:
    """``||R1 x|| / ||R2 x||``; ``inf`` when the stable component vanishes.

    Raises
    ------
    ZeroState
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if not np.any(x):
        raise ZeroState("state is zero")
    top = vector_norm(spec.R1 @ x)
    bottom = vector_norm(spec.R2 @ x)
    scale = vector_norm(x)
    if bottom <= 1e-14 * scale:
        return math.inf
    return float(top / bottom)
