"""
Command-line experiment runner.

Subcommands::

    ppgmm graph-gen      connected geometric graph -> edge list + report
    ppgmm em-run         one protocol and the centralised oracle, same init
    ppgmm privacy-audit  per-iteration NMI of a target node, per protocol
    ppgmm calibrate-mi   KSG against closed-form Gaussian MI

Settings resolve as command defaults, then ``--config`` (a flat JSON
document, or any file this tool wrote), then command-line flags. Every
output embeds the resolved settings: JSON files under a ``"config"`` key,
CSV and edge-list files on a leading ``# config=`` line, JSON-lines
transcripts on their first line. Passing such a file back to ``--config``
reproduces the run byte for byte. Outputs go to ``--out``, else
``$PPGMM_OUTPUT_DIR``, else the working directory.

Failures print one JSON object ``{"error", "message", ...}`` on stderr and
exit with status 1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import data, gmm, graph as graphs, privacy, protocols
from ._rng import rng_for
from .errors import PPGMMError, RetriesExhausted

OUTPUT_ENV = "PPGMM_OUTPUT_DIR"
CONFIG_PREFIX = "# config="


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _strs(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


# key -> (flag parser, help); lists are comma-separated on the command line
OPTIONS = {
    "seed": (int, "master seed; every random stream derives from it"),
    "graph": (str, "fig1 | geometric | file | path of an edge-list file"),
    "n": (int, "node count of a geometric graph"),
    "radius": (float, "connection radius (default sqrt(2 ln n / n))"),
    "graph_file": (str, "edge-list file when graph=file"),
    "retries": (int, "redraws allowed for a disconnected geometric graph"),
    "dataset": (str, "standin | parkinsons | csv (default: csv if a data path is given, else standin)"),
    "data_path": (str, "CSV path for dataset=parkinsons or csv"),
    "label_column": (str, "column split off as labels (dataset=csv)"),
    "drop": (_strs, "further columns to discard (dataset=csv)"),
    "pca_k": (int, "PCA components; 0 keeps the raw features"),
    "standardize": (None, "scale features to unit variance before PCA"),
    "protocol": (str, "federated | secure_sum | subspace"),
    "protocols": (_strs, "protocols to audit"),
    "c": (int, "mixture components"),
    "T": (int, "EM iterations"),
    "sigma_lambda": (float, "standard deviation of the initial PDMM duals"),
    "rho": (float, "PDMM penalty"),
    "tol": (float, "consensus stopping tolerance"),
    "max_iters": (int, "consensus iteration cap"),
    "mode": (str, "synchronous | asynchronous"),
    "mask_scale": (float, "secure-sum mask standard deviation (default from the data)"),
    "encrypt_relays": (None, "mark secure-sum relays as encrypted"),
    "transcript": (None, "write the message transcript"),
    "corrupt": (_ints, "corrupt node labels, e.g. 2,4"),
    "adversary": (str, "passive | eavesdropper"),
    "target": (int, "honest node whose privacy is measured"),
    "trials": (int, "Monte Carlo trials"),
    "knn_k": (int, "KSG neighbour count"),
    "em_iters": (int, "EM iterations of the leakage experiment"),
    "mi_c": (int, "mixture components of the leakage experiment"),
    "normalize": (str, "responsibility normalisation: components | nodes"),
    "raw_features": (None, "measure raw (a, b) instead of the reconstructed datum"),
    "dump_features": (None, "also write the adversary's feature samples"),
    "rhos": (_floats, "correlations to calibrate against"),
    "sizes": (_ints, "sample sizes to calibrate at"),
    "repetitions": (int, "repetitions per calibration cell"),
}

# extra spellings accepted on the command line
ALIASES = {
    "c": ["--components"],
    "T": ["--iters"],
    "tol": ["--consensus-tol"],
    "data_path": ["--data"],
    "protocols": ["--protocol"],
}

DEFAULTS = {
    "graph-gen": {"seed": 0, "n": 80, "radius": None, "retries": 100},
    "em-run": {
        "seed": 0, "graph": "geometric", "n": 80, "radius": None, "graph_file": None,
        "retries": 100, "dataset": None, "data_path": None, "label_column": None,
        "drop": [], "pca_k": 2, "standardize": False, "protocol": "subspace", "c": 2, "T": 30,
        "sigma_lambda": 100.0, "rho": protocols.DEFAULT_RHO, "tol": 1e-8, "max_iters": 100_000,
        "mode": "synchronous", "mask_scale": None, "encrypt_relays": False, "transcript": True,
    },
    "privacy-audit": {
        "seed": 0, "graph": "fig1", "n": 80, "radius": None, "graph_file": None, "retries": 100,
        "protocols": [protocols.FEDERATED, protocols.SECURE_SUM, protocols.SUBSPACE],
        "corrupt": [2, 4], "adversary": "passive", "target": 1, "trials": 10_000, "knn_k": 3,
        "em_iters": 10, "mi_c": 1, "normalize": "components", "mask_scale": 1e3,
        "raw_features": False, "dump_features": False,
    },
    "calibrate-mi": {
        "seed": 0, "rhos": [0.0, 0.3, 0.6, 0.9], "sizes": [1000, 10_000], "repetitions": 20,
        "knn_k": 3,
    },
}


class ConfigError(PPGMMError, ValueError):
    pass


# -- config -------------------------------------------------------------------------------

def read_config(path):
    """Settings from a flat JSON file or from a file this tool emitted."""
    text = Path(path).read_text(encoding="utf-8")
    for line in text.splitlines():
        if line.startswith(CONFIG_PREFIX):
            return json.loads(line[len(CONFIG_PREFIX):])
    first = text.lstrip().splitlines()[0] if text.strip() else ""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        try:
            obj = json.loads(first)  # JSON-lines transcript
        except json.JSONDecodeError:
            raise ConfigError(f"{path}: neither JSON nor an emitted result file") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return obj.get("config", obj)


def _canonical(cfg):
    if cfg.get("protocol"):
        cfg["protocol"] = cfg["protocol"].replace("-", "_")
    if cfg.get("protocols"):
        cfg["protocols"] = [p.replace("-", "_") for p in cfg["protocols"]]
    if cfg.get("adversary") == "eavesdrop":
        cfg["adversary"] = "eavesdropper"
    if "dataset" in cfg and cfg["dataset"] is None:
        cfg["dataset"] = "csv" if cfg["data_path"] else "standin"
    graph = cfg.get("graph")
    if graph not in (None, "fig1", "geometric", "file"):
        cfg["graph"], cfg["graph_file"] = "file", graph
    return cfg


def resolve(command, file_cfg=None, overrides=None):
    cfg = dict(DEFAULTS[command])
    for source in (file_cfg or {}, overrides or {}):
        unknown = set(source) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown settings for {command}: {sorted(unknown)}")
        cfg.update(source)
    return _canonical(cfg)


def _dump(cfg):
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


# -- writers ------------------------------------------------------------------------------

def _num(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path, cfg, header, rows):
    lines = [CONFIG_PREFIX + _dump(cfg), ",".join(header)]
    lines += [",".join(_num(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path, cfg, body):
    Path(path).write_text(json.dumps({"config": cfg, **body}, indent=2) + "\n", encoding="utf-8")


def _write_transcript(path, cfg, transcript):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"config": cfg}, sort_keys=True) + "\n")
        for msg in transcript:
            fh.write(msg.to_json())
            fh.write("\n")


# -- shared building blocks ---------------------------------------------------------------

def connected_geometric_graph(n, radius, seed, retries):
    """Redraw a geometric graph until it is connected.

    Returns the graph and the number of redraws. Attempt ``k`` uses the
    sub-stream ``(seed, "graph", k)``, so a given seed always yields the
    same graph.

    Raises
    ------
    RetriesExhausted
    """
    if radius is None:
        radius = graphs.connectivity_radius(n)
    for attempt in range(retries + 1):
        g = graphs.random_geometric_graph(n, radius, rng_for(seed, "graph", attempt).integers(2**63))
        if graphs.is_connected(g):
            return g, attempt
    raise RetriesExhausted(retries)


def _build_graph(cfg):
    kind = cfg["graph"]
    if kind == "fig1":
        return graphs.fig1_graph(), 0
    if kind == "geometric":
        return connected_geometric_graph(cfg["n"], cfg["radius"], cfg["seed"], cfg["retries"])
    if kind == "file":
        if not cfg["graph_file"] or not Path(cfg["graph_file"]).is_file():
            raise ConfigError(f"graph file not found: {cfg['graph_file']!r}")
        return graphs.read_edgelist(cfg["graph_file"]), 0
    raise ConfigError(f"unknown graph kind {kind!r}")


def _build_points(cfg):
    kind, k = cfg["dataset"], cfg["pca_k"]
    if kind in ("parkinsons", "csv") and (not cfg["data_path"] or not Path(cfg["data_path"]).is_file()):
        raise ConfigError(f"data file not found: {cfg['data_path']!r}")
    if kind == "standin":
        X = data.parkinsons_standin(cfg["seed"])[1]
    elif kind == "parkinsons":
        X = data.load_parkinsons(cfg["data_path"]).X
    elif kind == "csv":
        X = data.load_csv(cfg["data_path"], cfg["label_column"], cfg["drop"]).X
    else:
        raise ConfigError(f"unknown dataset kind {kind!r}")
    if not k:
        return X, None
    res = data.pca(X, k, standardize=cfg["standardize"])
    return res.projected, res


def _check_nodes(g, nodes, what):
    bad = sorted(set(nodes) - set(g.nodes))
    if bad:
        raise ConfigError(f"{what} {bad} are not nodes of the graph")


def _params_deviation(p, q):
    return float(np.max(np.abs(protocols.params_vector(p) - protocols.params_vector(q))))


# -- commands -----------------------------------------------------------------------------

def cmd_graph_gen(cfg, out):
    g, retries = connected_geometric_graph(cfg["n"], cfg["radius"], cfg["seed"], cfg["retries"])
    radius = graphs.connectivity_radius(cfg["n"]) if cfg["radius"] is None else cfg["radius"]
    path = out / "graph.edgelist"
    graphs.write_edgelist(g, path, comments=["config=" + _dump(cfg), f"retries={retries}"])
    report = out / "graph.json"
    _write_json(report, cfg, {"n": g.n, "m": g.m, "radius": radius, "connected": True,
                              "retries": retries})
    return [path, report]


def cmd_em_run(cfg, out):
    protocol = cfg["protocol"]
    if protocol not in (protocols.FEDERATED, protocols.SECURE_SUM, protocols.SUBSPACE):
        raise ConfigError(f"unknown protocol {protocol!r}")
    g, retries = _build_graph(cfg)
    X, pca_res = _build_points(cfg)
    node_data = [X[ix] for ix in data.partition(len(X), g.n)]
    reg = gmm.regularization(X)
    init = gmm.init_params(X, cfg["c"], rng_for(cfg["seed"], "init").integers(2**32), reg)
    c, T, seed = cfg["c"], cfg["T"], cfg["seed"]
    if protocol == protocols.FEDERATED:
        run = protocols.run_federated_em(node_data, c, T, init, seed, reg)
    elif protocol == protocols.SECURE_SUM:
        run = protocols.run_secure_sum_em(g, node_data, c, T, init, seed, reg,
                                          cfg["mask_scale"], cfg["encrypt_relays"])
    else:
        opts = protocols.ConsensusOptions(cfg["mode"], cfg["rho"], cfg["tol"], cfg["max_iters"])
        run = protocols.run_subspace_em(g, node_data, c, T, init, cfg["sigma_lambda"], opts, seed, reg)
    oracle = gmm.centralized_em(X, c, T, init, reg=reg)

    ll_dev = [abs(a - b) for a, b in zip(run.loglik, oracle.loglik)]
    p_dev = [_params_deviation(p, q) for p, q in zip(run.params, oracle.params)]
    stem = f"em_{protocol}"
    files = []
    body = {
        "protocol": protocol,
        "graph": {"n": g.n, "m": g.m, "retries": retries},
        "points": len(X),
        "explained_ratio": None if pca_res is None else pca_res.explained_ratio.tolist(),
        "loglik": run.loglik,
        "centralized_loglik": oracle.loglik,
        "loglik_deviation": ll_dev,
        "max_loglik_deviation": max(ll_dev),
        "param_deviation": p_dev,
        "max_param_deviation": max(p_dev),
        "params": [p.to_dict() for p in run.params],
    }
    if run.cycle is not None:
        body["cycle"] = list(run.cycle)
    if run.consensus_iters:
        body["consensus_iters"] = run.consensus_iters
        body["node_spread"] = run.node_spread
    files.append(out / f"{stem}_trajectory.json")
    _write_json(files[-1], cfg, body)
    files.append(out / f"{stem}_loglik.csv")
    _write_csv(files[-1], cfg, ["iter", "loglik", "centralized_loglik", "abs_deviation",
                                "param_deviation"],
               [(t, a, b, d, e) for t, (a, b, d, e)
                in enumerate(zip(run.loglik, oracle.loglik, ll_dev, p_dev))])
    if cfg["transcript"]:
        files.append(out / f"{stem}_transcript.jsonl")
        _write_transcript(files[-1], cfg, run.transcript)
    return files


def cmd_privacy_audit(cfg, out):
    g, _ = _build_graph(cfg)
    _check_nodes(g, cfg["corrupt"], "corrupt nodes")
    _check_nodes(g, [cfg["target"]], "target")
    files, results = [], {}
    for protocol in cfg["protocols"]:
        got = privacy.monte_carlo_leakage(
            protocol, g, cfg["corrupt"], cfg["target"], cfg["trials"], cfg["em_iters"],
            cfg["seed"], cfg["mi_c"], cfg["knn_k"], cfg["adversary"], cfg["normalize"],
            cfg["mask_scale"], cfg["raw_features"], return_features=cfg["dump_features"])
        res = got[0] if cfg["dump_features"] else got
        results[protocol] = res
        files.append(out / f"nmi_{protocol}.csv")
        _write_csv(files[-1], cfg, ["iter", "nmi", "stderr"],
                   [(t, v, s) for t, (v, s) in enumerate(zip(res.nmi, res.stderr))])
        if cfg["dump_features"]:
            _, feats, x = got
            rows = []
            for t, F in enumerate(feats):
                if F is not None:
                    rows += [(t, i, x[i, g.index()[cfg["target"]]], *F[i]) for i in range(len(F))]
            width = max((F.shape[1] for F in feats if F is not None), default=0)
            files.append(out / f"features_{protocol}.csv")
            _write_csv(files[-1], cfg, ["iter", "trial", "x"] + [f"f{j}" for j in range(width)],
                       rows)
    summary = {"protocols": {p: {"nmi": r.nmi.tolist(), "stderr": r.stderr.tolist(),
                                 "feature_dims": r.feature_dims} for p, r in results.items()}}
    order = [p for p in (protocols.SUBSPACE, protocols.SECURE_SUM, protocols.FEDERATED)
             if p in results]
    gaps = []
    for lo, hi in zip(order, order[1:]):
        a, b = results[lo], results[hi]
        se = np.sqrt(a.stderr ** 2 + b.stderr ** 2)
        gaps.append({"lower": lo, "higher": hi, "gap": (b.nmi - a.nmi).tolist(),
                     "gap_in_stderr": ((b.nmi - a.nmi) / np.where(se > 0, se, np.inf)).tolist(),
                     "holds": bool(np.all(b.nmi - a.nmi > 3 * se))})
    summary["ordering"] = gaps
    files.append(out / "privacy_audit.json")
    _write_json(files[-1], cfg, summary)
    return files


def cmd_calibrate_mi(cfg, out):
    rows, cells = [], []
    for rho in cfg["rhos"]:
        truth = float(privacy.gaussian_mi(rho))
        for n in cfg["sizes"]:
            est = np.array([
                privacy.ksg_mi(*privacy.correlated_gaussian(
                    rho, n, rng_for(cfg["seed"], "calibrate", rep).integers(2**63)),
                    k=cfg["knn_k"]).value
                for rep in range(cfg["repetitions"])])
            mean = float(est.mean())
            rel = abs(mean - truth) / truth if truth > 0 else float("nan")
            spread = float(est.std(ddof=1) / np.sqrt(len(est))) if len(est) > 1 else 0.0
            rows.append((rho, n, cfg["repetitions"], truth, mean, rel, abs(mean - truth), spread))
            cells.append({"rho": rho, "n": n, "closed_form": truth, "mean_estimate": mean,
                          "rel_error": rel, "abs_error": abs(mean - truth), "stderr": spread})
    files = [out / "calibration.csv", out / "calibration.json"]
    _write_csv(files[0], cfg, ["rho", "n", "repetitions", "closed_form", "mean_estimate",
                               "rel_error", "abs_error", "stderr"], rows)
    _write_json(files[1], cfg, {"cells": cells})
    return files


COMMANDS = {
    "graph-gen": cmd_graph_gen,
    "em-run": cmd_em_run,
    "privacy-audit": cmd_privacy_audit,
    "calibrate-mi": cmd_calibrate_mi,
}


# -- argument parsing ---------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="ppgmm", description=__doc__.split("\n\n")[0].strip())
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=COMMANDS[name].__name__.replace("cmd_", "").replace("_", " "))
        p.add_argument("--config", help="JSON settings file, or an output of an earlier run")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or .)")
        for key in DEFAULTS[name]:
            conv, text = OPTIONS[key]
            flags = ["--" + key.replace("_", "-")] + ALIASES.get(key, [])
            if conv is None:
                p.add_argument(*flags, dest=key, action=argparse.BooleanOptionalAction,
                               default=argparse.SUPPRESS, help=text)
            else:
                p.add_argument(*flags, dest=key, type=conv, default=argparse.SUPPRESS, help=text)
    return parser


def _fail(exc, command):
    err = {"error": type(exc).__name__, "message": str(exc), "command": command}
    for attr in ("row", "column", "retries", "node"):
        if getattr(exc, attr, None) is not None:
            err[attr] = getattr(exc, attr)
    print(json.dumps(err), file=sys.stderr)
    return 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    command = args.command
    overrides = {k: v for k, v in vars(args).items() if k in DEFAULTS[command]}
    try:
        file_cfg = read_config(args.config) if args.config else None
        cfg = resolve(command, file_cfg, overrides)
        out = Path(args.out or os.environ.get(OUTPUT_ENV) or ".")
        out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[command](cfg, out)
    except (PPGMMError, ValueError, OSError) as exc:
        return _fail(exc, command)
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
