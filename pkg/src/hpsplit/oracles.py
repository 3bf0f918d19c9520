"""Numeric checks of the gradient and boundedness arguments behind the method.

* central finite differences as a gradient oracle;
* closed-form derivatives of a two-layer sigmoid MLP and the quadratic
  envelope ||df/dw||^2 <= c1 + c2 (1 + ||x||^2) ||w||^2;
* a sigmoid-state / tanh-output RNN with forward-mode derivative
  recursions and its boundedness facts;
* deterministic constructed sequences for the perturbed-argmin lemma.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import (Network, cnn_arch, init_network, loss_and_grad, mlp_arch,
                 output_grad, rnn_arch)
from .nn.layers import sigmoid


class OracleError(RuntimeError):
    pass


class ScenarioError(ValueError):
    pass


# ---------------------------------------------------------------------------
# finite differences

def finite_diff_grad(evaluate, params, step=1e-5):
    """(f(w + h e_i) - f(w - h e_i)) / 2h for every coordinate i."""
    if step <= 0:
        raise ValueError("step must be positive")
    w = np.array(params, dtype=float)
    grad = np.empty_like(w)
    for i in range(w.size):
        orig = w[i]
        w[i] = orig + step
        fp = evaluate(w)
        w[i] = orig - step
        fm = evaluate(w)
        w[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleError(f"non-finite evaluation at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * step)
    return grad


def relative_error(a, b, floor=1e-6):
    """Componentwise |a - b| / max(|a|, |b|, floor).

    The floor keeps components that are zero up to roundoff from dominating.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def loss_fn(net: Network, x, y, loss="mse"):
    """w -> mean loss of ``net`` at parameters w on (x, y)."""
    def evaluate(w):
        probe = Network(net.arch, w, net.layers, net.layout)
        return loss_and_grad(probe, x, y, loss)[0]
    return evaluate


# ---------------------------------------------------------------------------
# two-layer sigmoid MLP

def _check_two_layer(net):
    a = net.arch
    if not (a.family == "mlp" and a.depth == 1 and a.activation == "sigmoid"
            and a.output_head == "linear"):
        raise OracleError("closed forms need a one-hidden-layer sigmoid MLP with linear output")


def mlp_analytic_grad(x, net: Network):
    """df/dw from the closed forms, in the network's parameter layout.

    With f = sum_i alpha_i h_i + alpha_0 and h_i = sigmoid(sum_j beta_ij x_j + b_i):
    df/dalpha_0 = 1, df/dalpha_i = h_i, df/db_i = alpha_i h_i (1 - h_i),
    df/dbeta_ij = alpha_i x_j h_i (1 - h_i).
    """
    _check_two_layer(net)
    x = np.asarray(x, dtype=float)
    beta = net.view("hidden0.W").T  # (k, p)
    b = net.view("hidden0.b")
    alpha = net.view("output.W")[:, 0]
    h = sigmoid(beta @ x + b)
    s = alpha * h * (1.0 - h)
    grad = np.zeros_like(net.params)
    grad[net.layout["output.b"][0]] = 1.0
    grad[net.layout["output.W"][0]] = h
    grad[net.layout["hidden0.b"][0]] = s
    grad[net.layout["hidden0.W"][0]] = np.outer(x, s).ravel()  # stored as (p, k)
    return grad


def mlp_grad_sq_norm(x, net):
    g = mlp_analytic_grad(x, net)
    return float(g @ g)


def mlp_grad_bound_check(x, net, c1, c2) -> bool:
    """True iff ||df/dw||^2 <= c1 + c2 (1 + ||x||^2) ||w||^2."""
    x = np.asarray(x, dtype=float)
    w2 = float(net.params @ net.params)
    return mlp_grad_sq_norm(x, net) <= c1 + c2 * (1.0 + x @ x) * w2


def _probe(rng, p, k, x_scale=2.0, w_scale=2.0):
    net = Network(mlp_arch(p, k, 1, "sigmoid"),
                  rng.uniform(-w_scale, w_scale, (p + 1) * k + k + 1))
    return rng.uniform(-x_scale, x_scale, p), net


def calibrate_mlp_bound(p, k, n_probes=10_000, seed=0, margin=1.25):
    """Fit (c1, c2) on one probe set.

    c1 = 1 + k bounds the alpha_0 and alpha_i terms (h_i < 1); c2 is the
    largest observed excess per unit (1 + ||x||^2) ||w||^2, inflated by
    ``margin``. Returns (c1, c2).
    """
    rng = np.random.default_rng(seed)
    c1 = 1.0 + k
    worst = 0.0
    for _ in range(n_probes):
        x, net = _probe(rng, p, k)
        excess = mlp_grad_sq_norm(x, net) - c1
        worst = max(worst, excess / ((1.0 + x @ x) * (net.params @ net.params)))
    return c1, margin * worst


# ---------------------------------------------------------------------------
# sigmoid-state RNN with tanh output, forward-mode derivatives

@dataclass
class RnnA2:
    """h_t = sigmoid(W h_{t-1} + U x_t + b) (h_0 = 0), o_t = tanh(V.h_t + b')."""

    U: np.ndarray  # (K, p)
    W: np.ndarray  # (K, K)
    V: np.ndarray  # (K,)
    b: np.ndarray  # (K,)
    b_out: float

    @property
    def K(self):
        return self.W.shape[0]

    def flat(self):
        return np.concatenate([self.U.ravel(), self.V, self.W.ravel(), self.b, [self.b_out]])

    @classmethod
    def from_flat(cls, w, K, p):
        w = np.asarray(w, dtype=float)
        i = 0
        U = w[i:i + K * p].reshape(K, p); i += K * p
        V = w[i:i + K]; i += K
        W = w[i:i + K * K].reshape(K, K); i += K * K
        b = w[i:i + K]; i += K
        return cls(U, W, V, b, float(w[i]))

    @classmethod
    def random(cls, rng, K, p, scale=1.0):
        return cls.from_flat(rng.uniform(-scale, scale, K * p + K + K * K + K + 1), K, p)


def rnn_a2_output(model: RnnA2, x):
    """o^(T) for a (T, p) input sequence."""
    h = np.zeros(model.K)
    for xt in np.atleast_2d(x):
        h = sigmoid(model.W @ h + model.U @ xt + model.b)
    return float(np.tanh(model.V @ h + model.b_out))


@dataclass
class RnnBoundReport:
    output: float
    gradient: np.ndarray
    fd_gradient: np.ndarray | None
    max_rel_error: float
    max_abs_h: float
    max_abs_z: float
    max_abs_o: float
    max_sigmoid_slope: float
    max_tanh_slope: float
    violations: list = field(default_factory=list)
    # |z| < 1 is tracked apart from ``violations``: z = V.h + b' has no bound.
    z_violations: int = 0

    @property
    def ok(self):
        return not self.violations


def rnn_a2_grad(model: RnnA2, x):
    """Gradient of o^(T) by the forward recursions for dh/db, dh/dW, dh/dU.

    dh_l^t/dtheta = s_l^t (direct_l + sum_m W_lm dh_m^{t-1}/dtheta), with
    s_l^t = h_l^t (1 - h_l^t); then do/dtheta = (1 - o^2) sum_l V_l dh_l/dtheta.
    Also returns per-step diagnostics used by ``rnn_bound_check``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    K, p = model.U.shape
    h = np.zeros(K)
    dh_db = np.zeros((K, K))        # [l, i]
    dh_dW = np.zeros((K, K, K))     # [l, i, j]
    dh_dU = np.zeros((K, K, p))     # [l, i, j]
    steps = []
    eye = np.eye(K)
    for t, xt in enumerate(x):
        c = model.W @ h + model.U @ xt + model.b
        h_new = sigmoid(c)
        s = h_new * (1.0 - h_new)
        n_db = s[:, None] * (eye + model.W @ dh_db)
        n_dW = s[:, None, None] * (np.einsum("lm,mij->lij", model.W, dh_dW)
                                   + eye[:, :, None] * h[None, None, :])
        n_dU = s[:, None, None] * (np.einsum("lm,mij->lij", model.W, dh_dU)
                                   + eye[:, :, None] * xt[None, None, :])
        z = float(model.V @ h_new + model.b_out)
        steps.append({"t": t + 1, "h": h_new, "slope": s, "z": z, "o": np.tanh(z),
                      "prev": (dh_db, dh_dW, dh_dU), "next": (n_db, n_dW, n_dU)})
        h, dh_db, dh_dW, dh_dU = h_new, n_db, n_dW, n_dU
    z = steps[-1]["z"]
    do_dz = 1.0 - np.tanh(z) ** 2
    g = RnnA2(
        U=do_dz * np.einsum("l,lij->ij", model.V, dh_dU),
        W=do_dz * np.einsum("l,lij->ij", model.V, dh_dW),
        V=do_dz * h,
        b=do_dz * model.V @ dh_db,
        b_out=do_dz,
    )
    return g.flat(), steps


def rnn_bound_check(x, model: RnnA2, fd_step=1e-5, with_fd=True, tol=1e-4):
    """Evaluate the recurrence and check every boundedness fact per step.

    Strict checks: |h| < 1, 0 < sigmoid slope < 1, |do/dz| <= 1, |o| < 1,
    the one-step derivative growth bounds, and agreement of the recursion
    gradient with central differences (relative error < ``tol``).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    K, p = model.U.shape
    grad, steps = rnn_a2_grad(model, x)
    violations = []
    w_norm = np.linalg.norm(model.flat())
    x_norm = np.linalg.norm(x)
    for st in steps:
        t = st["t"]
        if not np.all(np.abs(st["h"]) < 1):
            violations.append(f"t={t}: |h| >= 1")
        if not np.all(st["slope"] < 1):
            violations.append(f"t={t}: sigmoid slope >= 1")
        if not abs(st["o"]) < 1:
            violations.append(f"t={t}: |o| >= 1")
        if not (1.0 - st["o"] ** 2) <= 1.0:
            violations.append(f"t={t}: |do/dz| > 1")
        # one-step growth: |dh^t| <= direct + K ||W|| max |dh^{t-1}|
        (p_db, p_dW, p_dU), (n_db, n_dW, n_dU) = st["prev"], st["next"]
        kw = K * w_norm
        if np.max(np.abs(n_db)) > 1 + kw * np.max(np.abs(p_db)) + 1e-12:
            violations.append(f"t={t}: dh/db growth bound")
        if np.max(np.abs(n_dW)) > 1 + kw * np.max(np.abs(p_dW)) + 1e-12:
            violations.append(f"t={t}: dh/dW growth bound")
        if np.max(np.abs(n_dU)) > x_norm + kw * np.max(np.abs(p_dU)) + 1e-12:
            violations.append(f"t={t}: dh/dU growth bound")
    fd = None
    max_rel = 0.0
    if with_fd:
        fd = finite_diff_grad(lambda w: rnn_a2_output(RnnA2.from_flat(w, K, p), x),
                              model.flat(), fd_step)
        max_rel = float(relative_error(grad, fd).max())
        if not max_rel < tol:
            violations.append(f"recursion vs finite differences: rel err {max_rel:.3g}")
    zs = np.array([st["z"] for st in steps])
    return RnnBoundReport(
        output=float(steps[-1]["o"]), gradient=grad, fd_gradient=fd, max_rel_error=max_rel,
        max_abs_h=float(max(np.abs(st["h"]).max() for st in steps)),
        max_abs_z=float(np.abs(zs).max()),
        max_abs_o=float(max(abs(st["o"]) for st in steps)),
        max_sigmoid_slope=float(max(st["slope"].max() for st in steps)),
        max_tanh_slope=float(max(1.0 - st["o"] ** 2 for st in steps)),
        violations=violations,
        z_violations=int(np.sum(np.abs(zs) >= 1)),
    )


# ---------------------------------------------------------------------------
# perturbed argmin lemma

@dataclass
class LemmaScenario:
    """Rows index n, columns index lambda.

    Built so that |a/B| <= c eta, |A - B|/B <= c eta and B >= kappa hold
    at every n.
    """

    n_values: np.ndarray
    eta: np.ndarray
    B: np.ndarray
    A: np.ndarray
    a: np.ndarray
    kappa: float
    c: float

    @property
    def lambda_count(self):
        return self.B.shape[1]

    @property
    def bound_constant(self):
        """C with A(sel)/inf A - 1 <= C eta at every n.

        From A(sel) + a(sel) <= A(opt) + a(opt) and B <= A / (1 - c eta):
        ratio <= 1 / (1 - 2 c eta), i.e. ratio - 1 <= 2c / (1 - 2 c eta_max) * eta.
        """
        worst = 2.0 * self.c * self.eta.max()
        if worst >= 1:
            raise ScenarioError("c * eta must stay below 1/2 for a finite constant")
        return 2.0 * self.c / (1.0 - worst)


def make_lemma_scenario(seed, n_values=(100, 1_000, 10_000, 100_000), lambda_count=5,
                        c=1.0, kappa=1.0, b_range=(1.0, 2.0)):
    rng = np.random.default_rng(seed)
    n_values = np.asarray(n_values, dtype=float)
    eta = n_values ** -0.5
    shape = (n_values.size, lambda_count)
    B = rng.uniform(*b_range, size=shape)
    B = np.maximum(B, kappa)
    A = B * (1.0 + c * eta[:, None] * rng.uniform(-1.0, 1.0, shape))
    a = B * c * eta[:, None] * rng.uniform(-1.0, 1.0, shape)
    return LemmaScenario(n_values, eta, B, A, a, kappa, c)


@dataclass
class LemmaReport:
    ratios: np.ndarray
    selected: np.ndarray
    empirical_constant: float
    bound_constant: float


def lemma1_check(scenario: LemmaScenario, n_values=None) -> LemmaReport:
    s = scenario
    if n_values is not None and not np.array_equal(np.asarray(n_values, float), s.n_values):
        raise ScenarioError("requested n values differ from the scenario's")
    if s.kappa <= 0:
        raise ScenarioError("kappa must be positive")
    tol = 1e-12
    slack = s.c * s.eta[:, None] * (1 + tol)
    if np.any(np.abs(s.a / s.B) > slack):
        raise ScenarioError("|a/B| exceeds c * eta")
    if np.any(np.abs(s.A - s.B) / s.B > slack):
        raise ScenarioError("|A - B|/B exceeds c * eta")
    if np.any(s.B < s.kappa):
        raise ScenarioError("B falls below kappa")
    sel = np.argmin(s.A + s.a, axis=1)  # first index on ties
    chosen = s.A[np.arange(sel.size), sel]
    ratios = chosen / s.A.min(axis=1)
    emp = float(np.max((ratios - 1.0) / s.eta))
    return LemmaReport(ratios, sel, emp, s.bound_constant)


# ---------------------------------------------------------------------------
# gradient-check suite

def _small_arch(family, rng):
    if family == "mlp":
        act = ("relu", "sigmoid", "tanh")[rng.integers(3)]
        head = ("linear", "sigmoid")[rng.integers(2)]
        return mlp_arch(int(rng.integers(2, 4)), int(rng.integers(2, 4)),
                        int(rng.integers(1, 3)), act, head)
    if family == "rnn":
        act = ("tanh", "sigmoid", "relu")[rng.integers(3)]
        return rnn_arch(int(rng.integers(2, 7)), int(rng.integers(2, 4)),
                        int(rng.integers(1, 3)), act)
    return cnn_arch(int(rng.integers(2, 4)), int(rng.integers(1, 3)), 2,
                    int(rng.integers(1, 3)), fc_hidden=4, image_side=12)


@dataclass
class GradcheckResult:
    family: str
    n_params: int
    loss: str
    max_rel_error: float
    steps: int | None = None  # sequence length for the recurrent family


def gradcheck_instance(family, seed, step=1e-5):
    rng = np.random.default_rng(seed)
    arch = _small_arch(family, rng)
    net = init_network(arch, rng)
    net.params[:] = rng.uniform(-1.0, 1.0, net.n_params)
    batch = 3
    x = rng.uniform(-1.0, 1.0, (batch, arch.input_dim))
    if arch.output_head == "sigmoid" and rng.random() < 0.5:
        loss, y = "ce", rng.integers(0, 2, batch).astype(float)
    else:
        loss, y = "mse", rng.normal(size=batch)
    _, grad = loss_and_grad(net, x, y, loss)
    fd = finite_diff_grad(loss_fn(net, x, y, loss), net.params, step)
    steps = arch.input_dim if family == "rnn" else None
    return GradcheckResult(family, net.n_params, loss, float(relative_error(grad, fd).max()), steps)


def gradcheck_suite(instances=20, seed=0, tol=1e-4):
    """Backprop vs finite differences per family, plus closed forms vs backprop."""
    results = {f: [gradcheck_instance(f, seed * 1000 + i) for i in range(instances)]
               for f in ("mlp", "cnn", "rnn")}
    rng = np.random.default_rng(seed + 7)
    closed = []
    for _ in range(instances):
        x, net = _probe(rng, int(rng.integers(2, 6)), int(rng.integers(1, 6)))
        closed.append(float(np.max(np.abs(mlp_analytic_grad(x, net) - output_grad(net, x)))))
    failures = [f"{f} instance {i}: rel err {r.max_rel_error:.3g}"
                for f, rs in results.items() for i, r in enumerate(rs)
                if not r.max_rel_error < tol]
    failures += [f"closed-form instance {i}: abs diff {d:.3g}"
                 for i, d in enumerate(closed) if not d <= 1e-12]
    return {"results": results, "closed_form_max_abs": closed, "failures": failures}
