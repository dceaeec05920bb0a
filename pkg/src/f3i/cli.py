"""Command line: data generation, imputation, bound-validation batches, and
joint imputation-classification training. CSV in/out with empty cells as
missing values; 17-significant-digit output so round trips are exact."""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .core import Config, DataMatrix, GaussianParams, InvalidArgumentError
from .evaluation import (
    TraceObjective,
    auc_score,
    bound_constants,
    cumulative_regret,
    masked_mse,
    mse,
    rmse,
    thm44_bound,
    thm51_bound,
)
from .imputer import (
    f3i_run,
    knn_distance_impute,
    knn_initial_impute,
    mean_impute,
    out_of_sample_impute,
)
from .joint import FULL_BCE, JointConfig, pcgrad_f3i_run
from .synthgen import (
    MissingnessSpec,
    apply_mar_logistic,
    apply_mcar,
    apply_mnar_gsm,
    cluster_labels,
    generate_complete,
)

METRICS_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "mse": {"type": ["number", "null"]},
        "rmse": {"type": ["number", "null"]},
        "masked_mse": {"type": ["number", "null"]},
        "regret": {"type": ["number", "null"]},
        "bound": {"type": ["number", "null"]},
        "sigma_miss": {"type": ["number", "null"]},
        "c_miss": {"type": ["number", "null"]},
        "t_final": {"type": ["integer", "null"]},
        "stop_reason": {"type": ["string", "null"]},
        "auc": {"type": ["number", "null"]},
    },
    "additionalProperties": False,
}

_MECHANISMS = ("mcar", "mar", "mnar-gsm")


def write_matrix_csv(path, values: np.ndarray, mask=None) -> None:
    values = np.asarray(values)
    n, f = values.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{j}" for j in range(f)])
        for i in range(n):
            row = []
            for j in range(f):
                missing = (mask is not None and mask[i, j]) or not np.isfinite(values[i, j])
                row.append("" if missing else format(values[i, j], ".17g"))
            w.writerow(row)


def write_mask_csv(path, mask: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{j}" for j in range(mask.shape[1])])
        for row in mask.astype(int):
            w.writerow(row.tolist())


def read_matrix_csv(path) -> DataMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidArgumentError(f"{path}: empty file")
    header = rows[0]
    f = len(header)
    vals = np.empty((len(rows) - 1, f))
    for i, row in enumerate(rows[1:]):
        if len(row) != f:
            raise InvalidArgumentError(
                f"{path}: row {i + 2} has {len(row)} fields, expected {f}"
            )
        vals[i] = [np.nan if cell == "" else float(cell) for cell in row]
    return DataMatrix.from_values(vals)


def read_labels_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:] if rows and not _is_number(rows[0][0]) else rows
    return np.array([float(r[0]) for r in body])


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(out: Path, command: str, args: argparse.Namespace,
              outputs, started: float) -> None:
    snapshot = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    _write_json(out / "manifest.json", {
        "command": command,
        "config": snapshot,
        "seed": snapshot.get("seed"),
        "outputs": sorted(outputs),
        "duration_s": round(time.time() - started, 3),
        "version": __version__,
    })


def _gen_instance(n, f, sigma, mechanism, p_miss, seed):
    """One synthetic instance: feature means mu ~ N(0, sigma^2), complete
    matrix, then the requested missingness mechanism."""
    ss = np.random.SeedSequence(seed)
    s_mu, s_data, s_mask = ss.spawn(3)
    mu = np.random.default_rng(s_mu).normal(0.0, sigma, size=f)
    params = GaussianParams(mu, sigma)
    complete = generate_complete(n, f, params, s_data)
    if p_miss == 0:
        return params, complete, complete
    if mechanism == "mcar":
        masked = apply_mcar(complete, p_miss, s_mask)
    elif mechanism == "mar":
        spec = MissingnessSpec("mar_logistic", p_miss)
        masked = apply_mar_logistic(complete, spec, s_mask)
    elif mechanism == "mnar-gsm":
        spec = MissingnessSpec("mnar_gsm", p_miss)
        masked = apply_mnar_gsm(complete, params, spec, s_mask)
    else:
        raise InvalidArgumentError(f"unknown mechanism {mechanism!r}")
    return params, complete, masked


def cmd_generate(args) -> int:
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params, complete, masked = _gen_instance(
        args.n, args.f, args.sigma, args.mechanism, args.p_miss, args.seed
    )
    write_matrix_csv(out / "complete.csv", complete.values)
    write_matrix_csv(out / "masked.csv", masked.values, masked.mask)
    write_mask_csv(out / "mask.csv", masked.mask)
    _write_json(out / "params.json", {
        "n": args.n, "f": args.f, "sigma": args.sigma,
        "mechanism": args.mechanism, "p_miss": args.p_miss, "seed": args.seed,
        "mu": params.mu.tolist(),
    })
    _manifest(out, "generate", args,
              ["complete.csv", "masked.csv", "mask.csv", "params.json"], started)
    return 0


def _null_metrics() -> dict:
    return {k: None for k in METRICS_SCHEMA["properties"]}


def cmd_impute(args) -> int:
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    X = read_matrix_csv(args.input)
    trace = None
    if args.method == "f3i":
        cfg = Config(n_neighbors=args.k, max_iter=args.max_iter, eta=args.eta,
                     beta=args.beta, seed=args.seed, bandwidth=args.h)
        imputed, trace = f3i_run(X, cfg)
    elif args.method == "mean":
        imputed = mean_impute(X)
    elif args.method == "knn-uniform":
        imputed = knn_initial_impute(X, args.k)
    elif args.method == "knn-distance":
        imputed = knn_distance_impute(X, args.k)
    else:
        raise InvalidArgumentError(f"unknown method {args.method!r}")
    write_matrix_csv(out / "imputed.csv", imputed.values)
    outputs = ["imputed.csv", "metrics.json"]
    metrics = _null_metrics()
    if trace is not None:
        metrics["t_final"] = trace.final_t
        metrics["stop_reason"] = trace.stop_reason
        _write_json(out / "trace.json", {
            "alphas": [a.tolist() for a in trace.alphas],
            "g_values": trace.g_values,
            "stop_reason": trace.stop_reason,
            "final_t": trace.final_t,
            "h": trace.h,
        })
        outputs.append("trace.json")
    if args.truth:
        truth = read_matrix_csv(args.truth)
        metrics["mse"] = mse(imputed, truth)
        metrics["rmse"] = rmse(imputed, truth)
        if X.mask.any():
            metrics["masked_mse"] = masked_mse(imputed, truth, X.mask)
        if trace is not None and args.sigma is not None:
            consts = bound_constants(trace, args.sigma)
            metrics["sigma_miss"] = consts.sigma_miss
            metrics["c_miss"] = consts.c_miss
            metrics["bound"] = consts.bound_value
            evaluator = TraceObjective(trace, density_ref=truth)
            metrics["regret"] = cumulative_regret(trace, evaluator)
    _write_json(out / "metrics.json", metrics)
    _manifest(out, "impute", args, outputs, started)
    return 0


def _validate_one(payload) -> dict:
    theorem, mechanism, n, f, sigma, p_miss, k, max_iter, eta, beta, seed = payload
    _, complete, masked = _gen_instance(n, f, sigma, mechanism, p_miss, seed)
    if theorem == "mse-bound":
        cfg = Config(n_neighbors=k, max_iter=max_iter, eta=eta, seed=seed)
        imputed, trace = f3i_run(masked, cfg)
        consts = bound_constants(trace, sigma)
        measured = n * f * mse(imputed, complete)
        bound = n * consts.c_miss
    elif theorem == "regret-bound":
        cfg = Config(n_neighbors=k, max_iter=max_iter, eta=eta, seed=seed)
        _, trace = f3i_run(masked, cfg)
        evaluator = TraceObjective(trace, density_ref=complete)
        measured = cumulative_regret(trace, evaluator)
        bound = thm44_bound(trace, sigma)
    elif theorem == "joint-bound":
        labels = cluster_labels(complete, seed)
        cfg = Config(n_neighbors=k, max_iter=max_iter, eta=eta, beta=beta, seed=seed)
        jcfg = JointConfig(beta=beta, epochs=2, classifier_lr=1.0)
        _, _, jtrace = pcgrad_f3i_run(masked, labels, cfg, jcfg)
        rec = jtrace.final
        from .joint import SigmoidClassifier

        clf_fixed = SigmoidClassifier(rec.omega_before, rec.bias_before)
        evaluator = TraceObjective(rec.trace, density_ref=complete, clf=clf_fixed,
                                   labels=labels, beta=beta,
                                   loss_variant=JointConfig().loss_variant)
        measured = cumulative_regret(rec.trace, evaluator)
        bound = thm51_bound(rec.trace, sigma, beta)
    else:
        raise InvalidArgumentError(f"unknown theorem {theorem!r}")
    return {"seed": seed, "measured": measured, "bound": bound,
            "satisfied": bool(measured <= bound)}


def cmd_validate(args) -> int:
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payloads = [
        (args.theorem, args.mechanism, args.n, args.f, args.sigma, args.p_miss,
         args.k, args.max_iter, args.eta, args.beta, args.seed + i)
        for i in range(args.runs)
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_validate_one, payloads))
    else:
        results = [_validate_one(p) for p in payloads]
    results.sort(key=lambda r: r["seed"])
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "measured", "bound", "satisfied"])
        for r in results:
            w.writerow([r["seed"], format(r["measured"], ".17g"),
                        format(r["bound"], ".17g"), int(r["satisfied"])])
    n_sat = sum(r["satisfied"] for r in results)
    summary = {
        "theorem": args.theorem,
        "mechanism": args.mechanism,
        "runs": args.runs,
        "satisfied": n_sat,
        "mean_measured": float(np.mean([r["measured"] for r in results])),
        "mean_bound": float(np.mean([r["bound"] for r in results])),
    }
    _write_json(out / "summary.json", summary)
    _manifest(out, "validate", args, ["runs.csv", "summary.json"], started)
    return 0 if n_sat == args.runs else 1


def cmd_joint(args) -> int:
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    X = read_matrix_csv(args.input)
    labels = read_labels_csv(args.labels)
    if labels.shape[0] != X.n_rows:
        raise InvalidArgumentError("labels length must match feature rows")
    rng = np.random.default_rng(args.seed)
    perm = rng.permutation(X.n_rows)
    n_train = int(round(args.train_frac * X.n_rows))
    n_val = int(round(args.val_frac * X.n_rows))
    idx_train = np.sort(perm[:n_train])
    idx_test = np.sort(perm[n_train + n_val:])
    Xtr = DataMatrix(X.values[idx_train], X.mask[idx_train])
    Xte = DataMatrix(X.values[idx_test], X.mask[idx_test])
    cfg = Config(n_neighbors=args.k, max_iter=args.max_iter, eta=args.eta,
                 beta=args.beta, seed=args.seed, bandwidth=args.h)
    jcfg = JointConfig(beta=args.beta, epochs=args.epochs,
                       classifier_lr=args.classifier_lr, loss_variant=FULL_BCE)
    imputed_tr, clf, jtrace = pcgrad_f3i_run(
        Xtr, labels[idx_train], cfg, jcfg,
        heldout=(Xte, labels[idx_test]),
    )
    final_trace = jtrace.final.trace
    full = X.masked_values()
    full[idx_train] = imputed_tr.values
    other = np.setdiff1d(np.arange(X.n_rows), idx_train)
    for i in other:
        full[i] = out_of_sample_impute(full[i], final_trace)
    write_matrix_csv(out / "imputed.csv", full)
    scores = clf.logits(full[idx_test])
    metrics = _null_metrics()
    metrics["auc"] = auc_score(labels[idx_test], scores)
    _write_json(out / "metrics.json", metrics)
    _write_json(out / "model.json", {"omega": clf.omega.tolist(), "bias": clf.bias})
    _manifest(out, "joint", args, ["imputed.csv", "metrics.json", "model.json"],
              started)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="f3i", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, k=True):
        sp.add_argument("--k", type=int, default=5)
        sp.add_argument("--max-iter", type=int, default=500)
        sp.add_argument("--eta", type=float, default=0.001)
        sp.add_argument("--beta", type=float, default=0.0)
        sp.add_argument("--h", type=float, default=None,
                        help="bandwidth override (default: concavity root)")

    g = sub.add_parser("generate", help="write a synthetic instance")
    g.add_argument("--n", type=int, default=50)
    g.add_argument("--f", type=int, default=100)
    g.add_argument("--sigma", type=float, default=0.1)
    g.add_argument("--mechanism", choices=_MECHANISMS, default="mcar")
    g.add_argument("--p-miss", type=float, default=0.25)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    im = sub.add_parser("impute", help="impute a CSV with missing cells")
    im.add_argument("--input", required=True)
    im.add_argument("--method", choices=("f3i", "mean", "knn-uniform", "knn-distance"),
                    default="f3i")
    common(im)
    im.add_argument("--seed", type=int, default=0)
    im.add_argument("--truth", default=None)
    im.add_argument("--sigma", type=float, default=None,
                    help="generator sigma (enables bound/regret metrics)")
    im.add_argument("--out", required=True)
    im.set_defaults(func=cmd_impute)

    v = sub.add_parser("validate", help="run a seeded bound-validation batch")
    v.add_argument("--theorem", choices=("mse-bound", "regret-bound", "joint-bound"),
                   required=True)
    v.add_argument("--runs", type=int, default=100)
    v.add_argument("--mechanism", choices=_MECHANISMS, default="mcar")
    v.add_argument("--n", type=int, default=50)
    v.add_argument("--f", type=int, default=100)
    v.add_argument("--sigma", type=float, default=0.1)
    v.add_argument("--p-miss", type=float, default=0.25)
    common(v)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_validate)

    j = sub.add_parser("joint", help="joint imputation + classification")
    j.add_argument("--input", required=True)
    j.add_argument("--labels", required=True)
    common(j)
    j.add_argument("--epochs", type=int, default=5)
    j.add_argument("--classifier-lr", type=float, default=1.0)
    j.add_argument("--train-frac", type=float, default=0.7)
    j.add_argument("--val-frac", type=float, default=0.2)
    j.add_argument("--seed", type=int, default=0)
    j.add_argument("--out", required=True)
    j.set_defaults(func=cmd_joint)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
