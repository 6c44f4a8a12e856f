"""Command-line entry point.

Subcommands::

    grapes generate-synthetic --n N --seed S --out DIR [--kind theorem1|sbm]
    grapes train --config FILE [--out DIR]
    grapes evaluate --data DIR [--checkpoint FILE]
    grapes compare --samplers a,b --data DIR --seeds 0,1 [--config FILE] --out DIR
    grapes diagnostics --run DIR

Results go to stdout as ``key<TAB>value`` lines or TSV tables. Any failure
prints exactly one JSON error record on stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigError, GrapesError
from .gcn import load_checkpoint, save_checkpoint
from .graph import edge_homophily
from .io import MetricsWriter, load_dataset, read_metrics, save_dataset
from .sampler import POLICY_NAMES
from .synthetic import PairRuleGcn, generate_sbm, generate_theorem1, random_splits
from .training import TrainConfig, estimator_for, evaluate_state, init_state, train

MODELS = ("gcn", "pair-rule")
SEED_ENV = "GRAPES_SEED"


@dataclass
class RunConfig:
    """A training run: the TrainConfig fields plus model, sampler and paths."""

    train: TrainConfig = field(default_factory=TrainConfig)
    sampler: str = "random"
    data: str = ""
    out: str = "run"
    model: str = "gcn"
    hidden_dim: int = 256
    sampler_hidden: int = 256
    sampler_layers: int = 2
    z_hidden: int = 64
    zero_sampler: bool = False

    def __post_init__(self):
        if self.sampler not in POLICY_NAMES:
            raise ConfigError(f"sampler must be one of {POLICY_NAMES}, got {self.sampler!r}")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.model == "pair-rule" and self.train.num_layers != 1:
            raise ConfigError("the pair-rule model needs num_layers = 1")
        expected = estimator_for(self.sampler)
        if self.train.estimator != expected:
            self.train.estimator = expected
            self.train.validate()

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = dict(raw)
        train_keys = set(TrainConfig.field_names())
        run_keys = {f.name for f in fields(cls)} - {"train"}
        unknown = set(raw) - train_keys - run_keys
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        tc = {k: raw.pop(k) for k in list(raw) if k in train_keys}
        if "sampler" in raw and "estimator" not in tc:
            tc["estimator"] = estimator_for(raw["sampler"])
        try:
            return cls(train=TrainConfig(**tc), **raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(out.pop("train"))
        return out


def load_run_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    cfg = RunConfig.from_dict(raw)
    env = os.environ.get(SEED_ENV)
    if env is not None:
        cfg.train.seed = _env_seed(env)
    return cfg


def _env_seed(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {text!r}") from None


def build_state(cfg: RunConfig, dataset):
    tc = cfg.train
    classifier = None
    if cfg.model == "pair-rule":
        classifier = PairRuleGcn(dataset.features.shape[1], dataset.labels.num_classes, cfg.hidden_dim,
                                 rng=np.random.default_rng(tc.seed))
    return init_state(tc, dataset.features.shape[1], dataset.labels.num_classes, cfg.sampler,
                      hidden_dim=cfg.hidden_dim, sampler_hidden=cfg.sampler_hidden,
                      sampler_layers=cfg.sampler_layers, z_hidden=cfg.z_hidden, classifier=classifier,
                      zero_sampler=cfg.zero_sampler)


def run_training(cfg: RunConfig, dataset, out_dir) -> float:
    """Train, writing metrics.jsonl, checkpoint.npz and result.json into ``out_dir``. Returns test F1."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = build_state(cfg, dataset)
    # the output directory is left out so reruns elsewhere produce identical files
    config = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    header = {"config": config, "n_nodes": dataset.num_nodes, "n_edges": dataset.graph.num_edges}
    with MetricsWriter(out / "metrics.jsonl", header) as sink:
        train(state, dataset, cfg.train, np.random.default_rng(cfg.train.seed), sink)
    test_f1 = evaluate_state(state, dataset, cfg.train, "test")
    save_checkpoint(out / "checkpoint.npz", state.nets(), {"config": cfg.to_dict()})
    (out / "result.json").write_text(json.dumps({"test_f1": test_f1}, sort_keys=True) + "\n")
    return test_f1


# -- subcommands ---------------------------------------------------------------

def cmd_generate(args) -> int:
    seed = args.seed
    if seed is None:
        seed = _env_seed(os.environ.get(SEED_ENV, "0"))
    rng = np.random.default_rng(seed)
    if args.kind == "theorem1":
        ds = generate_theorem1(args.n, rng).to_dataset(random_splits(args.n, rng))
    else:
        ds = generate_sbm(args.n, args.classes, rng)
    save_dataset(ds, args.out)
    print(f"n_nodes\t{ds.num_nodes}\nn_edges\t{ds.graph.num_edges}\nout\t{args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    if args.out:
        cfg.out = args.out
    if not cfg.data:
        raise ConfigError("config needs a 'data' path")
    test_f1 = run_training(cfg, load_dataset(cfg.data), cfg.out)
    print(f"test_f1\t{test_f1!r}\nout\t{cfg.out}")
    return 0


def cmd_evaluate(args) -> int:
    ds = load_dataset(args.data)
    print(f"n_nodes\t{ds.num_nodes}")
    print(f"n_edges\t{ds.graph.num_edges}")
    if ds.graph.num_edges:
        print(f"homophily\t{edge_homophily(ds.graph, ds.labels)!r}")
    if args.checkpoint:
        nets, meta = load_checkpoint(args.checkpoint)
        if "config" not in meta:
            raise ConfigError("checkpoint carries no run configuration")
        cfg = RunConfig.from_dict(meta["config"])
        state = build_state(cfg, ds)
        for name, net in state.nets().items():
            if name not in nets:
                raise ConfigError(f"checkpoint has no weights for {name}")
            net.load_state_dict(nets[name])
        print(f"test_f1\t{evaluate_state(state, ds, cfg.train, 'test')!r}")
    return 0


def _parse_list(text: str, kind=str) -> list:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ConfigError(f"empty list {text!r}")
    try:
        return [kind(t) for t in items]
    except ValueError:
        raise ConfigError(f"cannot parse {text!r}") from None


def cmd_compare(args) -> int:
    from .plotting import plot_f1_curves

    samplers = _parse_list(args.samplers)
    seeds = _parse_list(args.seeds, int)
    base = load_run_config(args.config).to_dict() if args.config else {}
    for s in samplers:
        if s not in POLICY_NAMES:
            raise ConfigError(f"unknown sampler {s!r}; choose from {POLICY_NAMES}")
    ds = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, curves = [], {}
    for sampler in samplers:
        scores = []
        for seed in seeds:
            raw = dict(base, sampler=sampler, seed=seed, data=str(args.data))
            raw.pop("estimator", None)
            cfg = RunConfig.from_dict(raw)
            cell = out / f"{sampler}-seed{seed}"
            scores.append(run_training(cfg, ds, cell))
            _, recs = read_metrics(cell / "metrics.jsonl")
            curves.setdefault(sampler, []).append([r["val_f1"] for r in recs])
        rows.append((sampler, float(np.mean(scores)), float(np.std(scores)), len(scores)))
    table = "sampler\tmean_test_f1\tstd_test_f1\tn_seeds\n" + "".join(
        f"{s}\t{m:.6f}\t{sd:.6f}\t{n}\n" for s, m, sd, n in rows)
    (out / "summary.tsv").write_text(table)
    plot_f1_curves(curves, out / "val_f1.png")
    sys.stdout.write(table)
    return 0


def cmd_diagnostics(args) -> int:
    from .plotting import plot_diagnostics

    run = Path(args.run)
    path = run / "metrics.jsonl"
    if not path.is_file():
        raise ConfigError(f"{path} does not exist")
    _, records = read_metrics(path)
    lines = ["epoch\tlayer\tentropy_mean\tentropy_std\tcandidates\tselected"]
    for r in records:
        for l, (m, s) in enumerate(zip(r["entropy_mean"], r["entropy_std"]), start=1):
            lines.append(f"{r['epoch']}\t{l}\t{_fmt(m)}\t{_fmt(s)}\t{_fmt(r['candidates'][l - 1])}\t"
                         f"{_fmt(r['selected'][l - 1])}")
    (run / "entropy.tsv").write_text("\n".join(lines) + "\n")
    label_lines = ["epoch\tclass\tlabel_diff"]
    for r in records:
        for c, d in enumerate(r["label_diff"]):
            label_lines.append(f"{r['epoch']}\t{c}\t{_fmt(d)}")
    (run / "label_diff.tsv").write_text("\n".join(label_lines) + "\n")
    plot_diagnostics(records, run / "diagnostics.png")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def _fmt(x) -> str:
    return "nan" if x is None else f"{x:.6f}"


# -- argument parsing and error records ----------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="grapes", description="Adaptive layer-wise sampling for GCN training.")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP threads")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate-synthetic", help="write a synthetic dataset bundle")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.add_argument("--kind", choices=("theorem1", "sbm"), default="theorem1")
    g.add_argument("--classes", type=int, default=4, help="classes for the sbm kind")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train from a JSON run config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="dataset statistics and optional checkpoint F1")
    e.add_argument("--data", required=True)
    e.add_argument("--checkpoint", default=None)
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("compare", help="train each sampler for each seed and summarise")
    c.add_argument("--samplers", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--seeds", required=True)
    c.add_argument("--config", default=None)
    c.add_argument("--out", default="compare")
    c.set_defaults(func=cmd_compare)

    d = sub.add_parser("diagnostics", help="entropy and label-skew summaries of a run")
    d.add_argument("--run", required=True)
    d.set_defaults(func=cmd_diagnostics)
    return p


def _error_record(exc: BaseException) -> dict:
    if isinstance(exc, GrapesError):
        return exc.to_record()
    if isinstance(exc, OSError):
        return {"error": "io", "message": str(exc)}
    return {"error": "internal", "message": f"{type(exc).__name__}: {exc}"}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except SystemExit as exc:
        # --help exits through argparse
        return int(exc.code or 0)
    except Exception as exc:  # every failure becomes one machine-readable record
        sys.stderr.write(json.dumps(_error_record(exc), sort_keys=True) + "\n")
        return 2 if isinstance(exc, ConfigError) else 1


if __name__ == "__main__":
    sys.exit(main())
