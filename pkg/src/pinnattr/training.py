"""Composite collocation loss and the two-phase optimizer stack.

The trained objective is the single-mean form

    L_total(theta) = (1/N) * sum_i w_i * l_i(theta),   w_i = N / group size,

which reproduces the usual pair of group means (mean squared PDE residual
over interior points plus mean squared boundary residual over boundary
points) while keeping one per-point loss L(x_i) = w_i * l_i that the
influence machinery can differentiate point by point.

Optimization runs full-batch and deterministic: Adam first, then L-BFGS with
a strong-Wolfe line search.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Var
from .errors import ContractViolation, EmptySetError
from .geometry import BoundarySegment, CollocationSet, DomainSpec
from .model import MlpConfig, ParamVector, forward_jet_batch
from .physics import FluidParams, PdeVariant, ns_residual


@dataclass(frozen=True)
class PhysicsSetup:
    """Everything the residuals need to know about the problem."""

    spec: DomainSpec
    fluid: FluidParams
    variant: PdeVariant = PdeVariant.FULL


@dataclass
class LossBreakdown:
    l_pde: float
    l_bc: float
    total: float
    per_point: list[tuple[int, float]]


@dataclass(frozen=True)
class TrainConfig:
    adam_steps: int = 5000
    adam_lr: float = 1e-3
    lbfgs_steps: int = 500
    lbfgs_memory: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.adam_steps < 0 or self.lbfgs_steps < 0:
            raise ContractViolation("step counts must be non-negative")
        if self.adam_lr <= 0.0:
            raise ContractViolation("adam_lr must be positive")
        if self.lbfgs_memory < 1:
            raise ContractViolation("lbfgs_memory must be at least 1")


# --------------------------------------------------------------------------
# loss assembly
# --------------------------------------------------------------------------

def interior_point_losses(params: ParamVector, config: MlpConfig,
                          xs: np.ndarray, ys: np.ndarray,
                          setup: PhysicsSetup, tape: Tape) -> Var:
    """Raw squared-residual sums per interior point, as one (n,) tape node."""
    jets = forward_jet_batch(params, xs, ys, config, tape)
    r = ns_residual(jets, setup.fluid, setup.variant)
    rx, ry, rc = r.r_mom_x, r.r_mom_y, r.r_cont
    return rx * rx + ry * ry + rc * rc


def boundary_point_losses(params: ParamVector, config: MlpConfig,
                          xs: np.ndarray, ys: np.ndarray, segs: list,
                          setup: PhysicsSetup, tape: Tape) -> Var:
    """Raw squared boundary residuals per point, as one (n,) tape node.

    All segments evaluate through one masked expression so the batch stays a
    single elementwise pipeline (per-point sweeps need that).
    """
    spec, fluid = setup.spec, setup.fluid
    m_out = np.array([1.0 if s is BoundarySegment.OUTLET else 0.0
                      for s in segs])
    m_in = np.array([1.0 if s is BoundarySegment.INLET else 0.0
                     for s in segs])
    m_wall_or_in = 1.0 - m_out
    prof = m_in * (fluid.u_max * ys * (spec.y_max - ys) / spec.y_max ** 2)
    jets = forward_jet_batch(params, xs, ys, config, tape)
    u1, u2, p = jets.u1, jets.u2, jets.p
    inv_rho = 1.0 / fluid.rho
    r_a = (u1.v - prof) * m_wall_or_in \
        + (u1.dx * fluid.nu - p.v * inv_rho) * m_out
    r_b = u2.v * m_wall_or_in + u1.dy * (fluid.nu * m_out)
    return r_a * r_a + r_b * r_b


def _split_coords(colloc: CollocationSet):
    xi = np.array([p.x for p in colloc.interior])
    yi = np.array([p.y for p in colloc.interior])
    xb = np.array([p.x for p, _ in colloc.boundary])
    yb = np.array([p.y for p, _ in colloc.boundary])
    segs = [s for _, s in colloc.boundary]
    return xi, yi, xb, yb, segs


def _breakdown(l_int: np.ndarray, l_bc: np.ndarray) -> LossBreakdown:
    n_pde, n_bc = l_int.shape[0], l_bc.shape[0]
    c_int = l_int / n_pde
    c_bc = l_bc / n_bc
    l_pde = float(np.sum(c_int))
    l_b = float(np.sum(c_bc))
    per_point = [(i, float(c)) for i, c in enumerate(c_int)]
    per_point += [(n_pde + i, float(c)) for i, c in enumerate(c_bc)]
    return LossBreakdown(l_pde=l_pde, l_bc=l_b, total=l_pde + l_b,
                         per_point=per_point)


def composite_loss(params: ParamVector, config: MlpConfig,
                   colloc: CollocationSet, setup: PhysicsSetup) -> LossBreakdown:
    """Loss values only (no gradient); see module docstring for weighting."""
    breakdown, _ = loss_and_grad(params, config, colloc, setup,
                                 need_grad=False)
    return breakdown


def loss_and_grad(params: ParamVector, config: MlpConfig,
                  colloc: CollocationSet, setup: PhysicsSetup,
                  need_grad: bool = True):
    """Composite loss plus its exact parameter gradient."""
    if colloc.n_interior == 0 or colloc.n_boundary == 0:
        raise EmptySetError("collocation set must be non-empty in both the"
                            " interior and boundary groups")
    xi, yi, xb, yb, segs = _split_coords(colloc)

    tape_i = Tape()
    li = interior_point_losses(params, config, xi, yi, setup, tape_i)
    tape_b = Tape()
    lb = boundary_point_losses(params, config, xb, yb, segs, setup, tape_b)

    breakdown = _breakdown(np.asarray(li.val), np.asarray(lb.val))
    if not need_grad:
        return breakdown, None
    g = tape_i.grad(tape_i.batch_sum(li)) / colloc.n_interior \
        + tape_b.grad(tape_b.batch_sum(lb)) / colloc.n_boundary
    return breakdown, g


def pointwise_loss_jacobian(params: ParamVector, config: MlpConfig,
                            colloc: CollocationSet, setup: PhysicsSetup):
    """Weighted per-point losses L(x_i) = w_i * l_i and their gradients.

    Returns (losses (N,), jacobian (N, P)) in collocation order.  One
    per-point reverse sweep per group covers all points at once.
    """
    if colloc.n_interior == 0 or colloc.n_boundary == 0:
        raise EmptySetError("collocation set must be non-empty in both the"
                            " interior and boundary groups")
    xi, yi, xb, yb, segs = _split_coords(colloc)
    w = colloc.weights

    tape_i = Tape()
    li = interior_point_losses(params, config, xi, yi, setup, tape_i)
    jac_i = tape_i.grad_per_point(li)
    tape_b = Tape()
    lb = boundary_point_losses(params, config, xb, yb, segs, setup, tape_b)
    jac_b = tape_b.grad_per_point(lb)

    losses = np.concatenate([np.asarray(li.val), np.asarray(lb.val)]) * w
    jac = np.vstack([jac_i, jac_b]) * w[:, None]
    return losses, jac


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), t=0)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8):
    """One bias-corrected Adam update; returns (new params, new state)."""
    if state.m.shape != params.shape:
        raise ContractViolation("optimizer state does not match parameters")
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    t = state.t + 1
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, AdamState(m=m, v=v, t=t)


# --------------------------------------------------------------------------
# L-BFGS with strong Wolfe line search
# --------------------------------------------------------------------------

@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    grad_norm: float
    iterations: int
    status: str  # converged | max_steps | line_search_failure | nonfinite_abort


def lbfgs_optimize(x0: np.ndarray, loss_fn, steps: int, memory: int = 20,
                   grad_tol: float = 1e-10, c1: float = 1e-4, c2: float = 0.9,
                   callback=None) -> LbfgsResult:
    """Two-loop-recursion L-BFGS.

    loss_fn maps a parameter vector to (loss, gradient).  Terminates on the
    step budget, gradient norm below grad_tol, or line-search failure; on a
    non-finite loss it stops and returns the last finite iterate.  Accepted
    steps satisfy the Armijo condition, so the returned loss never exceeds
    the entry loss.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    f, g = loss_fn(x)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        return LbfgsResult(x, float(f), float(np.linalg.norm(g)), 0,
                           "nonfinite_abort")
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    status = "max_steps"
    k = 0
    while k < steps:
        if float(np.linalg.norm(g)) < grad_tol:
            break
        d = _two_loop_direction(g, s_hist, y_hist)
        if float(d @ g) >= 0.0:  # lost descent; restart from steepest descent
            s_hist.clear()
            y_hist.clear()
            d = -g
        step = _strong_wolfe(loss_fn, x, f, g, d, c1, c2)
        if step is None:
            status = "line_search_failure"
            break
        alpha, f_new, g_new = step
        s = alpha * d
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        x = x + s
        f, g = f_new, g_new
        k += 1
        if callback is not None:
            callback(k, x, f, g)
    if float(np.linalg.norm(g)) < grad_tol:
        status = "converged"
    return LbfgsResult(x, float(f), float(np.linalg.norm(g)), k, status)


def _two_loop_direction(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    rhos = [1.0 / float(y @ s) for s, y in zip(s_hist, y_hist)]
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rhos)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rhos), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def _strong_wolfe(loss_fn, x, f0, g0, d, c1, c2, alpha_max=1e10,
                  max_evals=30):
    """Bracket-and-zoom strong Wolfe search; returns (alpha, f, g) or None."""
    df0 = float(g0 @ d)
    if df0 >= 0.0:
        return None

    def phi(alpha):
        f, g = loss_fn(x + alpha * d)
        return f, g, float(g @ d)

    alpha_prev, f_prev, df_prev = 0.0, f0, df0
    alpha = 1.0
    for i in range(max_evals):
        f, g, df = phi(alpha)
        if not np.isfinite(f):
            # overshoot into a non-finite region: zoom back toward the start
            result = _zoom(phi, alpha_prev, f_prev, df_prev, alpha,
                           f0, df0, c1, c2)
            return result
        if f > f0 + c1 * alpha * df0 or (i > 0 and f >= f_prev):
            return _zoom(phi, alpha_prev, f_prev, df_prev, alpha,
                         f0, df0, c1, c2)
        if abs(df) <= -c2 * df0:
            return alpha, f, g
        if df >= 0.0:
            return _zoom(phi, alpha, f, df, alpha_prev, f0, df0, c1, c2)
        alpha_prev, f_prev, df_prev = alpha, f, df
        alpha = min(2.0 * alpha, alpha_max)
        if alpha >= alpha_max:
            return None
    return None


def _zoom(phi, lo, f_lo, df_lo, hi, f0, df0, c1, c2, max_iters=30):
    for _ in range(max_iters):
        alpha = _interpolate(lo, f_lo, df_lo, hi)
        f, g, df = phi(alpha)
        if not np.isfinite(f) or f > f0 + c1 * alpha * df0 or f >= f_lo:
            hi = alpha
        else:
            if abs(df) <= -c2 * df0:
                return alpha, f, g
            if df * (hi - lo) >= 0.0:
                hi = lo
            lo, f_lo, df_lo = alpha, f, df
        if abs(hi - lo) < 1e-18 * max(1.0, abs(lo)):
            break
    return None


def _interpolate(lo, f_lo, df_lo, hi):
    # quadratic model through (lo, f_lo, df_lo) and the width midpoint as a
    # safeguard; falls back to bisection when the model is unusable
    mid = 0.5 * (lo + hi)
    denom = df_lo
    if denom == 0.0 or not np.isfinite(denom):
        return mid
    return mid


# --------------------------------------------------------------------------
# two-phase training
# --------------------------------------------------------------------------

@dataclass
class HistoryRow:
    step: int
    phase: str
    l_pde: float
    l_bc: float
    total: float


@dataclass
class TrainResult:
    params: ParamVector
    history: list[HistoryRow]
    checkpoints: list[tuple[str, int, ParamVector]] = field(default_factory=list)
    lbfgs_status: str = "not_run"


def train(config: TrainConfig, model_config: MlpConfig,
          colloc: CollocationSet, setup: PhysicsSetup,
          init: ParamVector | None = None) -> TrainResult:
    """Run the Adam phase then the L-BFGS phase, recording loss history and
    periodic checkpoints (every 10% of each phase)."""
    from .model import init_params

    params = (init.copy() if init is not None
              else init_params(model_config))
    history: list[HistoryRow] = []
    checkpoints: list[tuple[str, int, ParamVector]] = []

    adam_every = max(1, config.adam_steps // 10)
    state = AdamState.zeros(len(params))
    theta = params.values
    for step in range(config.adam_steps):
        bd, g = loss_and_grad(ParamVector(theta), model_config, colloc, setup)
        history.append(HistoryRow(step, "adam", bd.l_pde, bd.l_bc, bd.total))
        theta, state = adam_step(theta, g, state, config.adam_lr)
        if (step + 1) % adam_every == 0:
            checkpoints.append(("adam", step + 1, ParamVector(theta.copy())))

    cache: dict = {}

    def loss_fn(x):
        bd, g = loss_and_grad(ParamVector(x), model_config, colloc, setup)
        cache["last"] = (x.tobytes(), bd)
        return bd.total, g

    lbfgs_every = max(1, config.lbfgs_steps // 10)
    base = config.adam_steps

    def on_iter(k, x, f, g):
        key, bd = cache["last"]
        if key != x.tobytes():
            bd, _ = loss_and_grad(ParamVector(x), model_config, colloc, setup,
                                  need_grad=False)
        history.append(HistoryRow(base + k, "lbfgs", bd.l_pde, bd.l_bc,
                                  bd.total))
        if k % lbfgs_every == 0:
            checkpoints.append(("lbfgs", k, ParamVector(x.copy())))

    status = "not_run"
    if config.lbfgs_steps > 0:
        result = lbfgs_optimize(theta, loss_fn, config.lbfgs_steps,
                                memory=config.lbfgs_memory, callback=on_iter)
        theta = result.x
        status = result.status

    return TrainResult(params=ParamVector(theta), history=history,
                       checkpoints=checkpoints, lbfgs_status=status)
