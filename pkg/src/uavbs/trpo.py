"""Trust-region policy optimization over the UAV world.

The algorithm pieces (batch collection, rewards-to-go / generalized advantage
recursion, policy-gradient estimate, Fisher-vector products, conjugate
gradient and the KL-constrained backtracking line search) are plain functions
over flat parameter vectors; :class:`TrpoAgent` wires them into an
sklearn-style estimator with ``fit(world)`` / ``predict(observation)``.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import baseline as baseline_mod
from .metrics import MetricsRow
from .nets import (DiagGaussian, GaussianPolicy, ValueNet, log_prob_grads,
                   save_checkpoint)
from .validation import check_rng
from .world import Action

logger = logging.getLogger(__name__)


@dataclass
class Batch:
    """N transitions from consecutive episodes (episodes are contiguous and
    d_t = 1 exactly at each episode's final transition)."""

    states: np.ndarray        # (N, S)
    actions: np.ndarray       # (N, B)
    rewards: np.ndarray       # (N,)
    dones: np.ndarray         # (N,), 0/1
    next_states: np.ndarray   # (N, S)
    log_probs_old: np.ndarray  # (N,)
    returns: np.ndarray = None      # rewards-to-go, filled by the GAE pass
    advantages: np.ndarray = None   # normalized advantages, filled after GAE


def collect(policy: GaussianPolicy, world, batch_size: int, rng):
    """Run the stochastic policy for exactly ``batch_size`` transitions.

    The final episode may be truncated by the batch boundary; its last done
    flag stays 0 so the advantage recursion bootstraps from the value net.
    Also returns per-step diagnostics arrays for metrics.
    """
    rng = check_rng(rng)
    n = batch_size
    states = np.empty((n, world.observation_dim))
    actions = np.empty((n, world.action_dim))
    rewards = np.empty(n)
    dones = np.empty(n)
    next_states = np.empty((n, world.observation_dim))
    log_probs = np.empty(n)
    diag_keys = ("speed_violation", "boundary_violation", "speed", "height",
                 "dist_to_cluster", "sum_rate", "sum_rss_snr", "delta_a")
    info = {key: np.empty(n) for key in diag_keys}

    t = 0
    state = obs = None
    last_users = None
    while t < n:
        if state is None:
            state, obs = world.reset(rng)
        mean, log_std = policy.forward(obs)
        dist = DiagGaussian(mean=mean, log_std=log_std)
        action_vec = dist.sample(rng)
        state, outcome = world.step(state, Action.from_array(action_vec), rng)

        states[t] = obs
        actions[t] = action_vec
        rewards[t] = outcome.reward
        dones[t] = float(outcome.done)
        next_states[t] = outcome.observation
        log_probs[t] = dist.log_prob(action_vec)
        for key in diag_keys:
            info[key][t] = outcome.diagnostics[key]

        obs = outcome.observation
        last_users = state.users_xy
        t += 1
        if outcome.done:
            state = obs = None

    info["final_users"] = last_users.copy()
    return Batch(states=states, actions=actions, rewards=rewards, dones=dones,
                 next_states=next_states, log_probs_old=log_probs), info


def compute_returns_and_gae(batch: Batch, value_net: ValueNet,
                            gamma: float, lam: float):
    """Backward recursion for rewards-to-go and generalized advantages.

    R[t] = r_t + gamma*(1-d_t)*R[t+1], seeded with V(s_N) so a batch-truncated
    episode bootstraps; A[t] = delta_t + gamma*lam*(1-d_t)*A[t+1] with
    delta_t = r_t + gamma*(1-d_t)*V(s_{t+1}) - V(s_t). Returns raw arrays.
    """
    values = np.asarray(value_net.forward(batch.states), dtype=float)
    next_values = np.asarray(value_net.forward(batch.next_states), dtype=float)
    n = len(batch.rewards)
    returns = np.empty(n)
    advantages = np.empty(n)
    ret_carry = next_values[-1]
    adv_carry = 0.0
    for t in range(n - 1, -1, -1):
        mask = 1.0 - batch.dones[t]
        returns[t] = batch.rewards[t] + gamma * mask * ret_carry
        delta = batch.rewards[t] + gamma * mask * next_values[t] - values[t]
        adv_carry = delta + gamma * lam * mask * adv_carry
        advantages[t] = adv_carry
        ret_carry = returns[t]
    return returns, advantages


def normalize_advantages(advantages):
    """Shift/scale to zero mean and unit variance; all-equal input maps to zeros."""
    centered = advantages - advantages.mean()
    std = centered.std()
    if std < 1e-12:
        return np.zeros_like(advantages)
    return centered / std


def policy_gradient(policy: GaussianPolicy, batch: Batch):
    """Ascent direction (1/N) * sum_t grad log pi(a_t|s_t) * A[t], flat."""
    mean, log_std, cache = policy.forward_cached(batch.states)
    dist = DiagGaussian(mean=mean, log_std=log_std)
    dmean, dlog_std = log_prob_grads(dist, batch.actions)
    w = (batch.advantages / len(batch.advantages))[:, None]
    return policy.backward(cache, dmean * w, dlog_std * w)


def make_fvp(policy: GaussianPolicy, states, damping: float):
    """Return v -> F v + damping*v, where F is the Fisher matrix of the
    batch-mean KL from the current policy, never materialized.

    Uses the Gauss-Newton identity F = J^T diag(1/sigma^2, 2) J / N for the
    diagonal-Gaussian head, which equals the KL Hessian at the current
    parameters: a forward tangent pass, a diagonal output metric, and a
    reverse pass. The returned closure caches this forward pass, so it is
    only valid while the policy still holds the parameters it was built at.
    """
    _, log_std, cache = policy.forward_cached(states)
    inv_var = np.exp(-2.0 * log_std)
    n = len(np.atleast_2d(states))

    def fvp(v):
        v = np.asarray(v, dtype=float)
        dmean, dlog_std = policy.jvp(cache, v)
        out = policy.backward(cache, dmean * inv_var / n, 2.0 * dlog_std / n)
        return out + damping * v

    return fvp


def conjugate_gradient(operator, b, iters: int = 10, tol: float = 1e-10, x0=None):
    """Solve operator(x) = b for an SPD operator without materializing it.

    Returns (x, residual_norm). ``x0`` warm-starts the solve so a caller can
    extend a run that has not yet met its residual target.
    """
    b = np.asarray(b, dtype=float)
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - operator(x)
    p = r.copy()
    rdotr = float(r @ r)
    for _ in range(iters):
        if np.sqrt(rdotr) <= tol:
            break
        z = operator(p)
        pz = float(p @ z)
        if pz <= 0.0:
            logger.warning("conjugate gradient hit a non-positive curvature "
                           "direction (p.Az = %.3e); stopping early", pz)
            break
        alpha = rdotr / pz
        x += alpha * p
        r -= alpha * z
        new_rdotr = float(r @ r)
        p = r + (new_rdotr / rdotr) * p
        rdotr = new_rdotr
    return x, float(np.sqrt(rdotr))


@dataclass
class LineSearchResult:
    accepted: bool
    backtracks: int          # j of the accepted (or last tried) step
    kl: float                # measured batch-mean KL of the final parameters
    improvement: float       # surrogate gain of the final parameters
    step_norm: float


def surrogate_loss(policy: GaussianPolicy, batch: Batch) -> float:
    """Ratio-weighted advantage mean, the quantity the update must improve."""
    dist = policy.distribution(batch.states)
    ratio = np.exp(dist.log_prob(batch.actions) - batch.log_probs_old)
    return float(np.mean(ratio * batch.advantages))


def mean_kl(old_dist: DiagGaussian, policy: GaussianPolicy, states) -> float:
    return float(np.mean(old_dist.kl_to(policy.distribution(states))))


def line_search(policy: GaussianPolicy, batch: Batch, step_dir, fvp,
                delta_kl: float, alpha: float, max_backtracks: int) -> LineSearchResult:
    """Scale the natural-gradient direction to the trust-region boundary and
    geometrically backtrack until the measured KL stays within delta_kl AND
    the surrogate improves; otherwise restore the old parameters exactly.
    """
    theta_old = policy.get_flat()
    step_dir = np.asarray(step_dir, dtype=float)
    shs = float(step_dir @ fvp(step_dir))
    if not np.isfinite(shs) or shs <= 1e-300:
        return LineSearchResult(accepted=False, backtracks=0, kl=0.0,
                                improvement=0.0, step_norm=0.0)
    full_step = np.sqrt(2.0 * delta_kl / shs) * step_dir

    old_mean, old_log_std = policy.forward(batch.states)
    old_dist = DiagGaussian(mean=old_mean, log_std=old_log_std)
    loss_old = surrogate_loss(policy, batch)

    kl = improvement = 0.0
    j = 0
    for j in range(max_backtracks + 1):
        frac = alpha ** j
        policy.set_flat(theta_old + frac * full_step)
        kl = mean_kl(old_dist, policy, batch.states)
        improvement = surrogate_loss(policy, batch) - loss_old
        if np.isfinite(kl) and np.isfinite(improvement) \
                and kl <= delta_kl and improvement > 0.0:
            return LineSearchResult(accepted=True, backtracks=j, kl=kl,
                                    improvement=improvement,
                                    step_norm=float(np.linalg.norm(frac * full_step)))
    policy.set_flat(theta_old)
    return LineSearchResult(accepted=False, backtracks=j, kl=kl,
                            improvement=improvement, step_norm=0.0)


class Adam:
    """Adaptive-moment first-order optimizer over a flat parameter vector."""

    def __init__(self, dim, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(dim)
        self.v = np.zeros(dim)
        self.t = 0

    def step(self, grad):
        """Return the parameter increment for this gradient."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return -self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def update_value(value_net: ValueNet, batch: Batch, rng, epochs: int = 5,
                 lr: float = 1e-3, minibatch: int = 256, optimizer: Adam = None):
    """Regress the value net onto the rewards-to-go by minibatch MSE descent.

    Returns (loss_before, loss_after) on the full training batch.
    """
    rng = check_rng(rng)
    targets = batch.returns
    n = len(targets)
    opt = optimizer if optimizer is not None else Adam(value_net.param_count, lr)

    def full_loss():
        pred = value_net.forward(batch.states)
        return float(np.mean((pred - targets) ** 2))

    loss_before = full_loss()
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, minibatch):
            idx = order[start:start + minibatch]
            pred, cache = value_net.forward_cached(batch.states[idx])
            dout = 2.0 * (pred - targets[idx]) / len(idx)
            grad = value_net.backward(cache, dout)
            value_net.set_flat(value_net.get_flat() + opt.step(grad))
    loss_after = full_loss()
    if loss_after > loss_before:
        logger.warning("value regression increased the batch loss "
                       "(%.4g -> %.4g)", loss_before, loss_after)
    return loss_before, loss_after


class TrpoAgent(BaseEstimator):
    """Trust-region policy-gradient agent with an estimator-style interface.

    ``fit(world)`` trains the Gaussian policy and value net on the given
    world; ``predict(observation)`` returns the mean action and
    ``sample_action`` the stochastic one. Hyperparameters are plain
    constructor arguments so ``get_params``/``set_params``/``clone`` work as
    for any estimator.
    """

    def __init__(self, delta_kl=0.02, gae_lambda=0.94, batch_size=10000,
                 iterations=4000, gamma=0.99, backtrack_alpha=0.8,
                 max_backtracks=10, cg_iters=10, cg_damping=0.1,
                 value_epochs=5, value_lr=1e-3, value_minibatch=256,
                 hidden=(400, 300), baseline_draws=1000, seed=0,
                 checkpoint_interval=0, verbose=0):
        self.delta_kl = delta_kl
        self.gae_lambda = gae_lambda
        self.batch_size = batch_size
        self.iterations = iterations
        self.gamma = gamma
        self.backtrack_alpha = backtrack_alpha
        self.max_backtracks = max_backtracks
        self.cg_iters = cg_iters
        self.cg_damping = cg_damping
        self.value_epochs = value_epochs
        self.value_lr = value_lr
        self.value_minibatch = value_minibatch
        self.hidden = hidden
        self.baseline_draws = baseline_draws
        self.seed = seed
        self.checkpoint_interval = checkpoint_interval
        self.verbose = verbose

    def _check_params(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 < self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in (0, 1]")
        if self.delta_kl <= 0.0:
            raise ValueError("delta_kl must be > 0")
        if not 0.0 < self.backtrack_alpha < 1.0:
            raise ValueError("backtrack_alpha must lie in (0, 1)")
        if self.batch_size < 1 or self.iterations < 0:
            raise ValueError("batch_size must be >= 1 and iterations >= 0")

    def fit(self, world, out_dir=None):
        """Run the full training loop on ``world``; see the module docstring.

        Fills ``policy_``, ``value_net_``, ``history_`` (one MetricsRow per
        iteration) and ``diagnostics_`` (per-iteration update internals).
        """
        self._check_params()
        rng = np.random.default_rng(self.seed)
        policy = GaussianPolicy(world.observation_dim, world.action_dim,
                                hidden=self.hidden, rng=rng)
        value_net = ValueNet(world.observation_dim, hidden=self.hidden, rng=rng)
        value_opt = Adam(value_net.param_count, self.value_lr)
        history, diagnostics = [], []

        if out_dir is not None:
            save_checkpoint(f"{out_dir}/checkpoint_initial.bin",
                            policy, value_net, iteration=0, seed=self.seed)

        for k in range(self.iterations):
            batch, info = collect(policy, world, self.batch_size, rng)
            returns, raw_adv = compute_returns_and_gae(
                batch, value_net, self.gamma, self.gae_lambda)
            batch = replace(batch, returns=returns,
                            advantages=normalize_advantages(raw_adv))

            ls, cg_rel_residual = self._update_policy(policy, batch)
            loss_before, loss_after = update_value(
                value_net, batch, rng, epochs=self.value_epochs,
                lr=self.value_lr, minibatch=self.value_minibatch,
                optimizer=value_opt)

            row = self._metrics_row(k, batch, info, world.config, rng)
            history.append(row)
            diagnostics.append({
                "accepted": ls.accepted,
                "backtracks": ls.backtracks,
                "kl": ls.kl,
                "surrogate_improvement": ls.improvement,
                "step_norm": ls.step_norm,
                "cg_rel_residual": cg_rel_residual,
                "value_loss_before": loss_before,
                "value_loss_after": loss_after,
            })
            if self.verbose:
                print(f"iter {k:4d}  reward {row.avg_reward:9.3f}  "
                      f"kl {ls.kl:.4f}  accepted {ls.accepted}  "
                      f"delta_r {row.delta_r:.3f}")
            if (out_dir is not None and self.checkpoint_interval > 0
                    and (k + 1) % self.checkpoint_interval == 0):
                save_checkpoint(f"{out_dir}/checkpoint_{k + 1:05d}.bin",
                                policy, value_net, iteration=k + 1, seed=self.seed)

        if out_dir is not None and self.iterations > 0:
            save_checkpoint(f"{out_dir}/checkpoint_final.bin",
                            policy, value_net, iteration=self.iterations,
                            seed=self.seed)
        self.policy_ = policy
        self.value_net_ = value_net
        self.history_ = history
        self.diagnostics_ = diagnostics
        return self

    def _update_policy(self, policy, batch):
        """One natural-gradient trust-region step; returns the line-search
        result and the relative CG residual."""
        g = policy_gradient(policy, batch)
        g_norm = float(np.linalg.norm(g))
        if not np.isfinite(g_norm) or g_norm == 0.0:
            if g_norm != 0.0:
                logger.warning("non-finite policy gradient; skipping update")
            return LineSearchResult(False, 0, 0.0, 0.0, 0.0), 0.0

        fvp = make_fvp(policy, batch.states, self.cg_damping)
        x, residual = conjugate_gradient(fvp, g, iters=self.cg_iters)
        # The natural-gradient direction only needs a loose solve, but the
        # residual contract is 1e-2 relative; extend the solve if short.
        rounds = 1
        while residual / g_norm > 1e-2 and rounds < 5:
            x, residual = conjugate_gradient(fvp, g, iters=self.cg_iters, x0=x)
            rounds += 1
        rel_residual = residual / g_norm
        if rel_residual > 1e-2:
            logger.warning("conjugate gradient residual %.3e above contract "
                           "after %d rounds", rel_residual, rounds)

        ls = line_search(policy, batch, x, fvp, self.delta_kl,
                         self.backtrack_alpha, self.max_backtracks)
        if ls.accepted:
            assert ls.kl <= self.delta_kl * 1.05 and ls.improvement > 0.0
        return ls, rel_residual

    def _metrics_row(self, iteration, batch, info, world_config, rng):
        placement = baseline_mod.heuristic_placement(info["final_users"], world_config)
        heuristic = baseline_mod.heuristic_mean_rate(
            placement, info["final_users"], world_config, rng,
            draws=self.baseline_draws)
        return MetricsRow(
            iteration=iteration,
            avg_reward=float(batch.rewards.mean()),
            avg_speed_violation=float(info["speed_violation"].mean()),
            avg_boundary_violation=float(info["boundary_violation"].mean()),
            avg_log_sum_rss_snr=float(np.mean(10.0 * np.log10(info["sum_rss_snr"]))),
            avg_speed=float(info["speed"].mean()),
            avg_height=float(info["height"].mean()),
            avg_dist_to_cluster=float(info["dist_to_cluster"].mean()),
            delta_r=baseline_mod.rate_ratio(float(info["sum_rate"].mean()), heuristic),
        )

    def predict(self, observation):
        """Mean (deterministic) action for one observation or a batch of them."""
        self._check_fitted()
        obs = np.asarray(observation, dtype=float)
        if obs.shape[-1] != self.policy_.state_dim:
            raise ValueError(f"observation dim {obs.shape[-1]} != "
                             f"{self.policy_.state_dim}")
        mean, _ = self.policy_.forward(obs)
        return mean

    def sample_action(self, observation, rng):
        """Stochastic action, matching training-time behavior."""
        self._check_fitted()
        return self.policy_.distribution(np.asarray(observation, dtype=float)) \
                   .sample(check_rng(rng))

    def _check_fitted(self):
        if not hasattr(self, "policy_"):
            raise NotFittedError("this TrpoAgent has not been fitted yet")
