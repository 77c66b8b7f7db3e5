"""Command-line pipeline: dataset prep, measurement synthesis, moment
precomputation, recovery, SNR sweeps, and figure emission.

Exit codes: 0 success, 2 configuration error, 3 numeric divergence,
4 I/O or file-format error.
"""

import glob as globmod
import json
import math
import os
import sys

import click
import numpy as np

from . import autocorr as ac
from . import dataio, forward, moments, optim, priors

try:
    import tomllib
except ImportError:
    import tomli as tomllib


def _load_config(path):
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _toml_scalar(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return '"%s"' % str(v).replace("\\", "\\\\").replace('"', '\\"')


def _write_resolved(outdir, command, params):
    os.makedirs(outdir, exist_ok=True)
    lines = [f"[{command}]"]
    for key in sorted(params):
        if params[key] is not None:
            lines.append(f"{key} = {_toml_scalar(params[key])}")
    with open(os.path.join(outdir, "resolved.toml"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="TOML file with per-command default values.")
@click.pass_context
def cli(ctx, config_path):
    """Recover a small target image from multi-copy measurements."""
    ctx.default_map = _load_config(config_path)


def _load_target(path):
    path = str(path)
    if path.endswith(".npy"):
        return np.load(path).astype(np.float64)
    return dataio.read_raster(path)


def _parse_prior(spec, L):
    if spec in (None, "", "none", "zero"):
        return priors.ZeroScore(L)
    kind, _, arg = spec.partition(":")
    if kind == "neural":
        return priors.make_provider("neural", L, path=arg)
    if kind == "gaussian":
        with np.load(arg) as z:
            return priors.GaussianScore(z["mean"], float(z["var"]))
    if kind == "gmm":
        with np.load(arg) as z:
            return priors.GmmScore(z["weights"], z["means"], z["variances"])
    raise click.UsageError(f"unknown prior spec {spec!r}")


@cli.command()
@click.option("--target", required=True, type=click.Path(exists=True),
              help="Target image (.npy, .png or .pgm).")
@click.option("--out", "outdir", required=True, type=click.Path())
@click.option("--n", default=512, show_default=True, help="Frame side.")
@click.option("--gamma", default=0.1, show_default=True, help="Copy density.")
@click.option("--subs", default=1, show_default=True,
              help="Number of independent sub-measurements.")
@click.option("--sigma2", default=None, type=float,
              help="Noise variance (overrides --snr).")
@click.option("--snr", default=None, type=float,
              help="Noise level expressed as SNR of the planted copy.")
@click.option("--superres-low", default=0, show_default=True,
              help="If positive, plant copies down-sampled to this side.")
@click.option("--seed", default=0, show_default=True)
def simulate(target, outdir, n, gamma, subs, sigma2, snr, superres_low, seed):
    """Write measurement files for a target, plus plans and a manifest."""
    N = n
    x = _load_target(target)
    P = None
    if superres_low:
        P = forward.DownsampleOp(L_high=x.shape[0], L_low=superres_low)
    planted = P.apply(x) if P is not None else x
    if sigma2 is None:
        sigma2 = forward.sigma_for_snr(planted, snr) if snr else 0.0
    ms = forward.synthesize_set(x, N, subs, gamma, sigma2, seed, P=P)
    os.makedirs(outdir, exist_ok=True)
    files = []
    for k, m in enumerate(ms):
        name = f"sub_{k:03d}.mtd"
        forward.write_measurement(m, os.path.join(outdir, name))
        files.append({"file": name, "M": m.plan.M})
    np.save(os.path.join(outdir, "target.npy"), x)
    dataio.write_raster(np.clip(x, 0, 1), os.path.join(outdir, "target.png"))
    manifest = {
        "files": files, "N": N, "gamma": gamma, "sigma2": sigma2,
        "L_eff": planted.shape[0], "L_high": x.shape[0], "subs": subs,
        "seed": seed, "superres": bool(P),
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
    _write_resolved(outdir, "simulate", dict(
        target=target, n=N, gamma=gamma, subs=subs, sigma2=sigma2,
        superres_low=superres_low, seed=seed))
    click.echo(f"wrote {subs} measurement(s), M={[f['M'] for f in files]}")


@cli.command("moments")
@click.argument("measurements", nargs=-1, required=True)
@click.option("--shifts", required=True, type=int,
              help="Shift range side (the planted copy side).")
@click.option("--out", "outpath", required=True, type=click.Path())
@click.option("--gamma", default=None, type=float,
              help="Override the density recorded at synthesis.")
def moments_cmd(measurements, shifts, outpath, gamma):
    """Precompute the empirical autocorrelations of a measurement set."""
    L = shifts
    paths = []
    for pattern in measurements:
        hit = sorted(globmod.glob(pattern))
        paths.extend(hit if hit else [pattern])
    ms = [forward.read_measurement(p) for p in paths]
    a_y = ac.autocorr_measurement(ms, L)
    ac.save_autocorr(a_y, outpath)
    sigma2 = ms[0].sigma2
    if any(abs(m.sigma2 - sigma2) > 1e-12 for m in ms):
        raise click.UsageError("sub-measurements disagree on noise variance")
    meta = {
        "L": L, "gamma": gamma if gamma is not None
        else forward.combined_gamma(ms, L),
        "sigma2": sigma2,
        "copies": int(sum(m.copies for m in ms)),
        "pixels": int(sum(m.N ** 2 for m in ms)),
        "sources": [os.path.basename(p) for p in paths],
    }
    with open(outpath + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=1)
    click.echo(f"moments of {len(ms)} measurement(s) -> {outpath}")


def _system_from_files(moments_path, gamma_override=None):
    a_y = ac.load_autocorr(moments_path)
    with open(moments_path + ".meta.json") as fh:
        meta = json.load(fh)
    gamma = gamma_override if gamma_override is not None else meta["gamma"]
    return moments.build_system(a_y, gamma, meta["sigma2"])


@cli.command()
@click.option("--moments", "moments_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", "outdir", required=True, type=click.Path())
@click.option("--eta", required=True, type=float, help="Learning rate.")
@click.option("--t", required=True, type=int, help="Iteration count.")
@click.option("--mu", default=0.9, show_default=True, help="Momentum.")
@click.option("--alpha", default=0.0, show_default=True,
              help="Off-grid score factor (super-resolution).")
@click.option("--prior", "prior_spec", default="none", show_default=True,
              help="none | gaussian:FILE.npz | gmm:FILE.npz | neural:FILE.")
@click.option("--superres-high", default=0, show_default=True,
              help="If positive, recover at this high-res side.")
@click.option("--gamma", default=None, type=float)
@click.option("--seed", default=0, show_default=True)
@click.option("--init", "init_path", default=None, type=click.Path(exists=True),
              help="Warm-start image (.npy) instead of random init.")
@click.option("--clip-unit", is_flag=True, default=False,
              help="Project iterates onto [0,1] after each step.")
@click.option("--ground-truth", "gt_path", default=None,
              type=click.Path(exists=True))
def recover(moments_path, outdir, eta, t, mu, alpha, prior_spec,
            superres_high, gamma, seed, init_path, clip_unit, gt_path):
    """Run the recovery loop on precomputed moments."""
    T = t
    sys_ = _system_from_files(moments_path, gamma)
    P = None
    side = sys_.L
    if superres_high:
        P = forward.DownsampleOp(L_high=superres_high, L_low=sys_.L)
        side = superres_high
    prior = _parse_prior(prior_spec, side)
    cfg = optim.RecoveryConfig(
        eta=eta, T=T, mu=mu, alpha=alpha,
        mode="superres" if P is not None else "standard", P=P,
        seed=seed, clip_unit=clip_unit,
        init="warm" if init_path else "random",
        init_image=np.load(init_path) if init_path else None)
    try:
        res = optim.recover(sys_, prior, cfg)
    except optim.DivergenceError as e:
        os.makedirs(outdir, exist_ok=True)
        if e.last_x is not None:
            np.save(os.path.join(outdir, "last_finite.npy"), e.last_x)
        raise
    os.makedirs(outdir, exist_ok=True)
    np.save(os.path.join(outdir, "xhat.npy"), res.x)
    dataio.write_raster(np.clip(res.x, 0, 1), os.path.join(outdir, "xhat.png"))
    with open(os.path.join(outdir, "trace.csv"), "w") as fh:
        fh.write("step,loss,grad_norm,score_norm\n")
        for (t, lv), (_, gn), (_, sn) in zip(res.loss_trace, res.grad_trace,
                                             res.score_trace):
            fh.write(f"{t},{lv!r},{gn!r},{sn!r}\n")
    report = {"final_loss": res.final_loss, "wall_ms": res.wall_ms,
              "prior": prior.kind, "steps": T}
    if gt_path:
        x_star = np.load(gt_path) if gt_path.endswith(".npy") \
            else dataio.read_raster(gt_path)
        report["error_E"] = optim.evaluate_error(res.x, x_star)
    with open(os.path.join(outdir, "result.json"), "w") as fh:
        json.dump(report, fh, indent=1)
    _write_resolved(outdir, "recover", dict(
        moments=moments_path, eta=eta, t=T, mu=mu, alpha=alpha,
        prior=prior_spec, superres_high=superres_high, seed=seed,
        clip_unit=clip_unit))
    msg = f"final loss {res.final_loss:.3e}"
    if "error_E" in report:
        msg += f", E = {report['error_E']:.4f}"
    click.echo(msg)


@cli.command()
@click.option("--targets", "targets_path", required=True,
              type=click.Path(exists=True),
              help="Stack of target images (.npy, shape (n, L, L)).")
@click.option("--out", "outdir", required=True, type=click.Path())
@click.option("--snr-grid", default="0.1,0.5,1,2,10", show_default=True)
@click.option("--n", default=512, show_default=True)
@click.option("--subs", default=4, show_default=True)
@click.option("--gamma", default=0.1, show_default=True)
@click.option("--eta", required=True, type=float)
@click.option("--t", required=True, type=int)
@click.option("--mu", default=0.9, show_default=True)
@click.option("--prior", "prior_spec", default="none", show_default=True)
@click.option("--restarts", default=3, show_default=True)
@click.option("--seed", default=0, show_default=True)
def sweep(targets_path, outdir, snr_grid, n, subs, gamma, eta, t, mu,
          prior_spec, restarts, seed):
    """Error-versus-SNR sweep over a set of targets, with and without prior."""
    N, T = n, t
    targets = list(np.load(targets_path))
    grid = [float(tok) for tok in snr_grid.split(",") if tok]
    L = targets[0].shape[0]
    prior_for = None
    if prior_spec not in ("none", "", None):
        provider = _parse_prior(prior_spec, L)
        prior_for = lambda ti: provider
    cfg = optim.RecoveryConfig(eta=eta, T=T, mu=mu)
    os.makedirs(outdir, exist_ok=True)
    rows = optim.sweep_snr(targets, grid, cfg, prior_for=prior_for, N=N,
                           subs=subs, gamma=gamma, seed=seed,
                           restarts=restarts)
    csv_path = os.path.join(outdir, "sweep.csv")
    optim.write_sweep_csv(rows, csv_path)
    _write_resolved(outdir, "sweep", dict(
        targets=targets_path, snr_grid=snr_grid, n=N, subs=subs, gamma=gamma,
        eta=eta, t=T, mu=mu, prior=prior_spec, restarts=restarts, seed=seed))
    _plot_sweep(rows, os.path.join(outdir, "errors.svg"))
    for (snr_val, pr), err in sorted(optim.summarize_sweep(rows).items()):
        click.echo(f"snr={snr_val:g} prior={pr} mean_E={err:.4f}")


def _plot_sweep(rows, outpath):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    cells = optim.summarize_sweep(rows)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for pr, label, style in ((0, "no prior", "o-"), (1, "with prior", "s-")):
        pts = sorted((s, e) for (s, p), e in cells.items() if p == pr)
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], style,
                    label=label)
    ax.set_xscale("log")
    ax.set_xlabel("SNR")
    ax.set_ylabel("mean relative error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(outpath)
    plt.close(fig)


@cli.command()
@click.option("--csv", "csv_path", required=True, type=click.Path(exists=True))
@click.option("--out", "outpath", required=True, type=click.Path())
def plot(csv_path, outpath):
    """Render an error-versus-SNR figure from a sweep table."""
    rows = optim.read_sweep_csv(csv_path)
    _plot_sweep(rows, outpath)
    click.echo(f"wrote {outpath}")


def _upscale_nearest(img, side):
    img = np.asarray(img, dtype=np.float64)
    if img.shape[0] == side:
        return img
    reps = side // img.shape[0]
    return np.kron(img, np.ones((reps, reps)))


@cli.command()
@click.option("--run", "runs", multiple=True, required=True,
              type=click.Path(exists=True),
              help="Recovery output directory; repeat for more columns.")
@click.option("--truth", "truths", multiple=True, required=True,
              type=click.Path(exists=True), help="High-res target (.npy).")
@click.option("--measurement", "meas_paths", multiple=True, required=True,
              help="Measurement file to crop a noisy window from.")
@click.option("--low", default=0, type=int,
              help="Low-res side for the second row (0 = same as high).")
@click.option("--out", "outpath", required=True, type=click.Path())
def panel(runs, truths, meas_paths, low, outpath):
    """Four-row montage: target, low-res target, noisy window, estimate."""
    if not (len(runs) == len(truths) == len(meas_paths)):
        raise click.UsageError("--run, --truth and --measurement must repeat "
                               "the same number of times")
    cols = []
    for run, truth, mp in zip(runs, truths, meas_paths):
        x = np.load(truth)
        side = x.shape[0]
        x_low = forward.DownsampleOp(side, low).apply(x) if low else x
        m = forward.read_measurement(mp)
        window = np.asarray(m.data[:x_low.shape[0] * 4, :x_low.shape[0] * 4],
                            dtype=np.float64)
        lo, hi = window.min(), window.max()
        window = (window - lo) / (hi - lo) if hi > lo else window * 0
        xhat = np.load(os.path.join(run, "xhat.npy"))
        tiles = [np.clip(t, 0, 1) for t in
                 (x, _upscale_nearest(x_low, side),
                  dataio.resize_bilinear(window, side, side),
                  xhat)]
        cols.append(np.vstack([np.pad(t, 1) for t in tiles]))
    dataio.write_raster(np.hstack(cols), outpath)
    click.echo(f"wrote {outpath}")


@cli.command("score-verify")
@click.option("--weights", required=True, type=click.Path(exists=True))
@click.option("--tol", default=1e-5, show_default=True)
def score_verify(weights, tol):
    """Check a weight file against its embedded test vector."""
    net = priors.load_scorenet(weights)
    dev = priors.verify_scorenet(net)
    status = "PASS" if dev <= tol else "FAIL"
    click.echo(f"{status} parity deviation {dev:.3e} (tol {tol:g}) "
               f"L={net.L} sigma_dsm={net.sigma_dsm:g}")
    if dev > tol:
        raise dataio.FormatError(f"{weights}: parity deviation {dev:.3e}")


@cli.command("prep-digits")
@click.option("--out", "outdir", required=True, type=click.Path())
@click.option("--mnist", "mnist_path", default=None,
              type=click.Path(exists=True),
              help="Official IDX image file; omit to draw surrogate digits.")
@click.option("--labels", "labels_path", default=None,
              type=click.Path(exists=True))
@click.option("--per-class", default=200, show_default=True,
              help="Surrogate samples per digit class.")
@click.option("--side", default=28, show_default=True)
@click.option("--holdout", default=10, show_default=True,
              help="Images reserved as recovery targets, never for training.")
@click.option("--seed", default=0, show_default=True)
def prep_digits(outdir, mnist_path, labels_path, per_class, side, holdout,
                seed):
    """Produce IDX training data plus held-out target images.

    With --mnist the official files are repackaged; otherwise a surrogate
    digit set is rendered from font glyphs with random jitter, which keeps
    the full pipeline runnable offline.
    """
    from .digits import build_digit_dataset
    os.makedirs(outdir, exist_ok=True)
    if mnist_path:
        images = dataio.parse_idx_file(mnist_path)
        labels = (dataio.parse_idx_file(labels_path) if labels_path
                  else np.zeros(len(images), dtype=np.int64))
    else:
        images, labels = build_digit_dataset(per_class, side, seed)
    hold_idx = list(range(0, len(images), max(1, len(images) // holdout)))
    hold_idx = hold_idx[:holdout]
    hold = [images[i] for i in hold_idx]
    train = [im for i, im in enumerate(images) if i not in set(hold_idx)]
    train_labels = [labels[i] for i in range(len(images))
                    if i not in set(hold_idx)]
    dataio.write_idx_images(train, os.path.join(outdir, "train-images-idx3"))
    dataio.write_idx_labels(train_labels,
                            os.path.join(outdir, "train-labels-idx1"))
    dataio.write_idx_images(hold, os.path.join(outdir, "targets-idx3"))
    np.save(os.path.join(outdir, "targets.npy"), np.stack(hold))
    with open(os.path.join(outdir, "exclusions.json"), "w") as fh:
        json.dump({"held_out_indices": hold_idx}, fh)
    _write_resolved(outdir, "prep_digits", dict(
        mnist=mnist_path, per_class=per_class, side=side, holdout=holdout,
        seed=seed))
    click.echo(f"{len(train)} training images, {len(hold)} held-out targets")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as e:
        sys.exit(e.exit_code)
    except click.UsageError as e:
        e.show()
        sys.exit(2)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except optim.DivergenceError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(3)
    except dataio.FormatError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(4)
    except (forward.PackingError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    except OSError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(4)
    sys.exit(0)


if __name__ == "__main__":
    main()
