"""Nesterov-accelerated recovery of the target from its moment system,
optionally steered by a score prior, in plain and super-resolution modes.

Each step evaluates the moment-loss gradient at the projected look-ahead
point and the score at the high-resolution look-ahead, rescales the score
on the sampled grid so its magnitude tracks the data gradient, applies the
small fixed factor alpha off the grid, and takes a momentum step:

    g  = grad loss(P(x + mu v))
    gt = P^T g                      (zeros off the sampled grid)
    s  = score(x + mu v)
    st = s * ||gt|| / ||s||  on the grid,   alpha * s  off it
    v <- mu v - eta (gt - st)
    x <- x + v
"""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .forward import DownsampleOp, identity_op
from .moments import MomentSystem, loss as moment_loss, loss_gradient
from .priors import ScoreProvider, ZeroScore


class DivergenceError(Exception):
    """The iterate left the finite range; carries the last finite state."""

    def __init__(self, step, last_x):
        super().__init__(f"iterate became non-finite at step {step}")
        self.step = step
        self.last_x = last_x


@dataclass
class RecoveryConfig:
    eta: float
    T: int
    mu: float = 0.9
    alpha: float = 0.0
    mode: str = "standard"
    P: Optional[DownsampleOp] = None
    init: str = "random"
    init_image: Optional[np.ndarray] = None
    seed: Optional[int] = None
    log_every: int = 0
    clip_unit: bool = False

    def validate(self):
        if not 0 <= self.mu < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.eta <= 0:
            raise ValueError("learning rate must be positive")
        if self.T < 1:
            raise ValueError("iteration count must be at least 1")
        if self.alpha < 0:
            raise ValueError("score factor cannot be negative")
        if self.mode not in ("standard", "superres"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "superres" and self.P is None:
            raise ValueError("super-resolution mode needs a down-sampling operator")
        return self


@dataclass
class RecoveryResult:
    x: np.ndarray
    final_loss: float
    loss_trace: list
    grad_trace: list
    score_trace: list
    wall_ms: float


def _initial_iterate(cfg: RecoveryConfig, side):
    if cfg.init == "warm":
        x0 = np.asarray(cfg.init_image, dtype=np.float64)
        if x0.shape != (side, side):
            raise ValueError("warm start has the wrong side")
        return x0.copy()
    if cfg.init == "random":
        rng = np.random.default_rng(cfg.seed)
        return rng.uniform(0.0, 1.0, size=(side, side))
    raise ValueError(f"unknown init policy {cfg.init!r}")


def nag_step(x, v, g_tilde, s, cfg: RecoveryConfig, mask=None):
    """One update of the iteration above, exposed for step-fidelity tests."""
    gnorm = float(np.linalg.norm(g_tilde))
    snorm = float(np.linalg.norm(s))
    if snorm > 0:
        on_grid = s * (gnorm / snorm)
    else:
        on_grid = np.zeros_like(s)
    if mask is None:
        s_tilde = on_grid
    else:
        s_tilde = np.where(mask, on_grid, cfg.alpha * s)
    v_new = cfg.mu * v - cfg.eta * (g_tilde - s_tilde)
    x_new = x + v_new
    if cfg.clip_unit:
        x_new = np.clip(x_new, 0.0, 1.0)
    return x_new, v_new


def recover(sys: Optional[MomentSystem], prior: ScoreProvider,
            cfg: RecoveryConfig, gradient_fn=None, loss_fn=None) -> RecoveryResult:
    """Run the full T-step recovery and return the final iterate with traces.

    ``gradient_fn``/``loss_fn`` replace the moment system's gradient and
    loss when given (the step-fidelity tests inject fixed fields this way);
    otherwise ``sys`` supplies both.
    """
    cfg.validate()
    if gradient_fn is None:
        if sys is None:
            raise ValueError("need either a moment system or a gradient_fn")
        gradient_fn = lambda z: loss_gradient(z, sys)
        loss_fn = lambda z: moment_loss(z, sys)
    P = cfg.P if cfg.mode == "superres" else None
    side = P.L_high if P is not None else (sys.L if sys is not None else prior.L)
    if prior.L != side:
        raise ValueError(f"prior side {prior.L} does not match iterate side {side}")
    mask = P.mask() if P is not None else None

    x = _initial_iterate(cfg, side)
    v = np.zeros_like(x)
    cadence = cfg.log_every if cfg.log_every > 0 else max(1, cfg.T // 100)
    loss_trace, grad_trace, score_trace = [], [], []
    t0 = time.perf_counter()
    for t in range(cfg.T):
        w = x + cfg.mu * v
        w_low = P.apply(w) if P is not None else w
        g = gradient_fn(w_low)
        g_tilde = P.adjoint(g) if P is not None else g
        s = prior.score(w)
        x_prev = x
        x, v = nag_step(x, v, g_tilde, s, cfg, mask=mask)
        if not np.isfinite(x).all():
            raise DivergenceError(t, x_prev)
        if (t + 1) % cadence == 0 or t + 1 == cfg.T:
            grad_trace.append((t + 1, float(np.linalg.norm(g_tilde))))
            score_trace.append((t + 1, float(np.linalg.norm(s))))
            if loss_fn is not None:
                x_low = P.apply(x) if P is not None else x
                loss_trace.append((t + 1, float(loss_fn(x_low))))
    wall_ms = (time.perf_counter() - t0) * 1000.0
    if loss_fn is not None:
        x_low = P.apply(x) if P is not None else x
        final_loss = float(loss_fn(x_low))
    else:
        final_loss = float("nan")
    return RecoveryResult(x=x, final_loss=final_loss, loss_trace=loss_trace,
                          grad_trace=grad_trace, score_trace=score_trace,
                          wall_ms=wall_ms)


def evaluate_error(x_hat, x_star) -> float:
    """Relative Frobenius error of an estimate against the ground truth."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x_star = np.asarray(x_star, dtype=np.float64)
    if x_hat.shape != x_star.shape:
        raise ValueError("estimate and ground truth differ in shape")
    denom = float(np.linalg.norm(x_star))
    if denom == 0:
        raise ValueError("ground truth has zero norm")
    return float(np.linalg.norm(x_star - x_hat)) / denom


ETA_GRID = tuple(10.0 ** k for k in range(-2, 4))


def tune_eta(sys, prior, cfg: RecoveryConfig, grid=ETA_GRID):
    """Pick the learning rate from a log grid by final loss on short runs."""
    best = None
    probe_T = max(1, min(cfg.T, 300))
    for eta in grid:
        trial = _with(cfg, eta=eta, T=probe_T)
        try:
            # probing past the stable rate is expected to overflow
            with np.errstate(over="ignore", invalid="ignore"):
                res = recover(sys, prior, trial)
        except DivergenceError:
            continue
        if np.isfinite(res.final_loss) and (best is None or res.final_loss < best[1]):
            best = (eta, res.final_loss)
    if best is None:
        raise DivergenceError(0, None)
    return best[0]


def _with(cfg: RecoveryConfig, **kw):
    fields = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    fields.update(kw)
    return RecoveryConfig(**fields)


def sweep_snr(targets, snr_grid, cfg: RecoveryConfig, prior_for=None,
              N=512, subs=4, gamma=0.1, seed=0, restarts=3,
              progress=None) -> list:
    """Grid of recoveries over SNR and prior on/off, one row per restart.

    ``prior_for``: callable target_index -> ScoreProvider for the
    prior-enabled half; the prior-off half always uses the zero score.
    Rows carry: snr, prior, target_id, restart, final_loss, error_E, wall_ms.
    """
    from .autocorr import autocorr_measurement
    from .forward import combined_gamma, sigma_for_snr, synthesize_set
    from .moments import build_system

    if not len(targets) or not len(snr_grid):
        raise ValueError("sweep needs at least one target and one SNR")
    rows = []
    master = np.random.SeedSequence(seed)
    for ti, x_star in enumerate(targets):
        x_star = np.asarray(x_star, dtype=np.float64)
        L = x_star.shape[0]
        for snr_val in snr_grid:
            sigma2 = sigma_for_snr(x_star, snr_val)
            synth_seed, *run_seeds = master.spawn(1 + restarts)
            ms = synthesize_set(x_star, N, subs, gamma, sigma2, synth_seed)
            a_y = autocorr_measurement(ms, L)
            sys = build_system(a_y, combined_gamma(ms, L), sigma2)
            for use_prior in (False, True):
                if use_prior and prior_for is None:
                    continue
                prior = prior_for(ti) if use_prior else ZeroScore(L)
                # both arms share restart seeds: paired comparison on
                # identical measurements and identical initializations
                for r in range(restarts):
                    run_cfg = _with(cfg, seed=run_seeds[r].generate_state(1)[0])
                    t_start = time.perf_counter()
                    try:
                        with np.errstate(over="ignore", invalid="ignore"):
                            res = recover(sys, prior, run_cfg)
                        final_loss = res.final_loss
                        err = evaluate_error(res.x, x_star)
                        wall = res.wall_ms
                    except DivergenceError:
                        final_loss = float("inf")
                        err = float("inf")
                        wall = (time.perf_counter() - t_start) * 1000.0
                    rows.append({
                        "snr": float(snr_val),
                        "prior": int(use_prior),
                        "target_id": ti,
                        "restart": r,
                        "final_loss": final_loss,
                        "error_E": err,
                        "wall_ms": wall,
                    })
                    if progress is not None:
                        progress(rows[-1])
    return rows


def best_restart_errors(rows):
    """Per (snr, prior, target): error of the restart with the lowest loss."""
    best = {}
    for row in rows:
        key = (row["snr"], row["prior"], row["target_id"])
        if key not in best or row["final_loss"] < best[key]["final_loss"]:
            best[key] = row
    return {k: v["error_E"] for k, v in best.items()}


def summarize_sweep(rows):
    """Mean best-restart error per (snr, prior) cell."""
    errors = best_restart_errors(rows)
    cells = {}
    for (snr_val, prior, _), err in errors.items():
        cells.setdefault((snr_val, prior), []).append(err)
    return {k: float(np.mean(v)) for k, v in cells.items()}


SWEEP_COLUMNS = ["snr", "prior", "target_id", "restart",
                 "final_loss", "error_E", "wall_ms"]


def write_sweep_csv(rows, path):
    import csv
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_sweep_csv(path):
    import csv
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty sweep table")
    for row in rows:
        if set(row) != set(SWEEP_COLUMNS):
            raise ValueError(f"{path}: unexpected sweep schema")
        for key in ("snr", "final_loss", "error_E", "wall_ms"):
            row[key] = float(row[key])
        for key in ("prior", "target_id", "restart"):
            row[key] = int(row[key])
    return rows
