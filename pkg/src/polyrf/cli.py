"""``polyrf`` command line: dataset generation, training, quantization,
evaluation, Poly-vs-Oracle simulation and latency budgeting.

Every subcommand reads an optional YAML experiment file (``--config``) and
lets flags override individual fields. Outputs go under ``--out``. The exit
status is 0 on success, 2 on invalid input, 3 on training failure, 4 on I/O
failure and 1 when ``budget`` finds the operating point infeasible.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import budget as bud
from .dataset import DatasetSpec, make_dataset
from .errors import InsufficientDataError, ParameterError, PolyrfError, TrainingError
from .polyrx import ClassCatalog, PerfectClassifier, RfnetClassifier, confusion_matrix, switching_trial
from .rfnet import (
    RfnetArch,
    RfnetModel,
    TrainConfig,
    load_model,
    predict,
    quantize,
    save_model,
    train,
)
from .rfnet.fixed import FixedFormat, QuantizedParams
from .waveform import ChannelModel, config_from_dict

SEED_ENV = "POLYRF_SEED"


@dataclass
class ExperimentSpec:
    catalog: str = "single-carrier-18"
    samples_per_symbol: int = 10
    channel: dict = field(default_factory=dict)
    dataset: dict = field(default_factory=dict)
    arch: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "out"

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as e:
            raise OSError(f"{path}: {e.strerror}") from e
        if not isinstance(raw, dict):
            raise ParameterError(f"{path}: expected a mapping at top level")
        unknown = set(raw) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ParameterError(f"{path}: unknown keys {sorted(unknown)}")
        return cls(**raw)

    # each accessor builds the library object, so construction doubles as validation

    def class_catalog(self) -> ClassCatalog:
        if self.catalog == "single-carrier-18":
            return ClassCatalog.single_carrier_18(self.samples_per_symbol)
        if self.catalog == "ofdm-9":
            return ClassCatalog.ofdm_9()
        path = Path(self.catalog)
        if not path.is_file():
            raise ParameterError(f"catalog must be single-carrier-18, ofdm-9 or a file; {self.catalog!r} is neither")
        entries = yaml.safe_load(path.read_text())
        return ClassCatalog(tuple(config_from_dict(d) for d in entries), "custom")

    def channel_model(self, seed: int = 0) -> ChannelModel | None:
        ch = dict(self.channel)
        if not ch:
            return None
        if ch.pop("nlos", False):
            return ChannelModel.nlos(seed=seed, **ch)
        taps = tuple(complex(t) for t in ch.pop("taps", (1.0,)))
        return ChannelModel(taps=taps, seed=seed, **ch)

    def dataset_spec(self) -> DatasetSpec:
        a = self.rfnet_arch()
        d = dict(self.dataset)
        d.setdefault("seed", self.seed)
        spec = DatasetSpec(w=a.input_w, h=a.input_h, **d)
        if spec.n_per_class < 1:
            raise ParameterError("dataset.n_per_class must be positive")
        return spec

    def rfnet_arch(self) -> RfnetArch:
        a = dict(self.arch)
        for k in ("c", "d"):
            if k in a:
                a[k] = tuple(a[k])
        a.setdefault("n_classes", len(self.class_catalog()))
        return RfnetArch(**a)

    def train_config(self) -> TrainConfig:
        t = dict(self.train)
        t.setdefault("seed", self.seed)
        return TrainConfig(**t)

    def run_params(self) -> dict:
        r = {"buffer_samples": 250_000, "switch_time_s": 0.25, "sample_rate_hz": 5e6, "n_segments": 6, "seeds": 20}
        r.update(self.run)
        if r["buffer_samples"] < 1 or r["switch_time_s"] <= 0 or r["sample_rate_hz"] <= 0 or r["n_segments"] < 2:
            raise ParameterError("run parameters must be positive with at least two segments")
        return r

    def validate(self) -> None:
        self.class_catalog()
        self.rfnet_arch()
        self.dataset_spec()
        self.train_config()
        self.run_params()
        self.channel_model()


def _apply_overrides(spec: ExperimentSpec, overrides: list[str]) -> ExperimentSpec:
    """``--set section.key=value`` with the value parsed as YAML."""
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ParameterError(f"--set expects key=value, got {item!r}")
        val = yaml.safe_load(value)
        section, _, sub = key.partition(".")
        if not hasattr(spec, section):
            raise ParameterError(f"unknown setting {section!r}")
        if sub:
            target = getattr(spec, section)
            if not isinstance(target, dict):
                raise ParameterError(f"{section!r} has no sub-keys")
            target[sub] = val
        else:
            setattr(spec, section, val)
    return spec


def _spec_from_args(args) -> ExperimentSpec:
    spec = ExperimentSpec.load(args.config) if args.config else ExperimentSpec()
    if SEED_ENV in os.environ and not (args.config and "seed" in (yaml.safe_load(Path(args.config).read_text()) or {})):
        spec.seed = int(os.environ[SEED_ENV])
    if args.seed is not None:
        spec.seed = args.seed
    if args.out is not None:
        spec.out = args.out
    _apply_overrides(spec, args.set)
    spec.validate()
    return spec


def _out_dir(spec: ExperimentSpec) -> Path:
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- dataset files --------------------------------------------------------


def write_dataset(path, x: np.ndarray, y: np.ndarray, catalog: ClassCatalog, sample_rate_hz: float) -> tuple[Path, Path]:
    """Raw little-endian float32 I/Q pairs plus a ``.json`` sidecar."""
    path = Path(path)
    n, h, w, _ = x.shape
    path.write_bytes(np.ascontiguousarray(x, dtype="<f4").tobytes())
    side = {
        "sample_rate_hz": sample_rate_hz,
        "w": w,
        "h": h,
        "labels": [{"start": i * w * h, "label": int(lab), "config": catalog[int(lab)].to_dict()} for i, lab in enumerate(y)],
        "class_names": catalog.names,
    }
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps(side, sort_keys=True))
    return path, sidecar


def read_dataset(path) -> tuple[np.ndarray, np.ndarray, dict]:
    path = Path(path)
    try:
        side = json.loads(path.with_suffix(".json").read_text())
        raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    except OSError as e:
        raise OSError(f"{e.filename}: {e.strerror}") from e
    w, h = side["w"], side["h"]
    if raw.size != len(side["labels"]) * w * h * 2:
        raise ParameterError(f"{path}: size does not match its sidecar")
    x = raw.astype(np.float64).reshape(-1, h, w, 2)
    y = np.array([e["label"] for e in side["labels"]], dtype=np.int64)
    return x, y, side


def _split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.random.default_rng([seed, 7]).permutation(n)
    k = int(round(n * fraction))
    return idx[k:], idx[:k]


# --- subcommands ----------------------------------------------------------


def cmd_gen_dataset(args) -> int:
    spec = _spec_from_args(args)
    catalog = spec.class_catalog()
    ds = spec.dataset_spec()
    x, y = make_dataset(catalog.configs, ds)
    path, _ = write_dataset(_out_dir(spec) / f"{args.name}.iq", x, y, catalog, ds.sample_rate_hz)
    print(f"wrote {len(y)} tensors ({len(catalog)} classes) to {path}")
    return 0


def _eval_rows(model: RfnetModel, x, y, mode: str) -> dict:
    pred = predict(model, x, mode)
    return {"accuracy": float(np.mean(pred == y)), "n": int(y.size)}


def cmd_train(args) -> int:
    spec = _spec_from_args(args)
    arch = spec.rfnet_arch()
    x, y, side = read_dataset(args.data)
    if x.shape[1:3] != (arch.input_h, arch.input_w):
        raise ParameterError(f"dataset tensors are {x.shape[2]}x{x.shape[1]}, arch expects {arch.input_w}x{arch.input_h}")
    tr, te = _split(len(y), args.holdout, spec.seed)
    init = None
    if args.init:
        init = load_model(args.init).params
        if isinstance(init, QuantizedParams):
            raise ParameterError("cannot resume training from fixed-point weights")
    result = train(x[tr], y[tr], arch, spec.train_config(), init=init)
    model = RfnetModel(arch, result.params, {"class_names": side["class_names"]})
    out = _out_dir(spec)
    save_model(out / "model.rfnw", model)
    with open(out / "loss_history.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["epoch", "loss", "train_accuracy"])
        for i, (l, a) in enumerate(zip(result.loss_history, result.accuracy_history)):
            wr.writerow([i + 1, repr(l), repr(a)])
    metrics = {"train": _eval_rows(model, x[tr], y[tr], "float")}
    if te.size:
        metrics["holdout"] = _eval_rows(model, x[te], y[te], "float")
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True))
    print(json.dumps(metrics, sort_keys=True))
    return 0


def cmd_quantize(args) -> int:
    model = load_model(args.weights)
    fmt = FixedFormat.parse(args.format)
    params = model.params if isinstance(model.params, QuantizedParams) else quantize(model.params, fmt)
    if params.fmt != fmt:
        raise ParameterError(f"weights are already {params.fmt.name}")
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(out, RfnetModel(model.arch, params, model.meta))
    print(f"wrote {fmt.name} weights to {out}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.weights)
    x, y, side = read_dataset(args.data)
    modes = ["float", "fixed"] if args.mode == "both" else [args.mode]
    if isinstance(model.params, QuantizedParams):
        modes = ["fixed"]
    res, preds = {}, {}
    for m in modes:
        preds[m] = predict(model, x, m)
        res[m] = {"accuracy": float(np.mean(preds[m] == y)), "n": int(y.size)}
    if len(modes) == 2:
        res["agreement"] = float(np.mean(preds["float"] == preds["fixed"]))
    text = json.dumps(res, indent=2, sort_keys=True)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.json").write_text(text)
        cm = confusion_matrix(x, y, model, modes[0])
        with open(out / "confusion.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["true\\pred"] + side["class_names"])
            for name, row in zip(side["class_names"], cm):
                wr.writerow([name] + row.tolist())
    print(text)
    return 0


def _one_seed(job):
    spec, weights, classifier, mode, seed, oracle_only = job
    catalog = spec.class_catalog()
    r = spec.run_params()
    if oracle_only:
        make = None
    elif classifier == "perfect":
        make = lambda tr: PerfectClassifier(tr, len(catalog))  # noqa: E731
    else:
        model = load_model(weights)
        make = lambda tr: RfnetClassifier(model, mode)  # noqa: E731
    trial = switching_trial(
        catalog, make, seed=seed,
        buffer_samples=r["buffer_samples"], switch_time_s=r["switch_time_s"],
        sample_rate_hz=r["sample_rate_hz"], n_segments=r["n_segments"],
        channel=spec.channel_model(seed),
    )
    return trial.report


def cmd_simulate(args) -> int:
    spec = _spec_from_args(args)
    catalog = spec.class_catalog()
    r = spec.run_params()
    if not args.oracle_only and args.classifier == "rfnet":
        if not args.weights:
            raise ParameterError("simulate needs --weights (or --classifier perfect / --oracle-only)")
        model = load_model(args.weights)
        if model.arch.n_classes != len(catalog):
            raise ParameterError(f"model has {model.arch.n_classes} classes, catalog {len(catalog)}")
    seeds = list(r["seeds"]) if isinstance(r["seeds"], list) else list(range(spec.seed, spec.seed + int(r["seeds"])))
    jobs = [(spec, args.weights, args.classifier, args.mode, s, args.oracle_only) for s in seeds]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as ex:
            reports = list(ex.map(_one_seed, jobs))
    else:
        reports = [_one_seed(j) for j in jobs]
    total = reports[0]
    for rep in reports[1:]:
        total = total.merge(rep)
    out = _out_dir(spec)
    (out / "report.json").write_text(total.to_json())
    (out / "report.csv").write_text(total.to_csv())
    with open(out / "seeds.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["seed", "phase", "accuracy", "bits_correct", "oracle_bits_correct", "ratio"])
        for s, rep in zip(seeds, reports):
            t = rep.total
            acc = rep.accuracy if rep.has_poly else ""
            ratio = rep.ratio if rep.has_poly else ""
            bits = t.bits_correct if rep.has_poly else ""
            wr.writerow([s, rep.meta["phase"], acc, bits, t.oracle_bits_correct, ratio])
    if total.has_poly:
        ratios = [rep.ratio for rep in reports]
        print(f"{len(seeds)} seeds: mean ratio {np.mean(ratios):.4f}, min {np.min(ratios):.4f}, pooled {total.ratio:.4f}")
    else:
        print(f"{len(seeds)} seeds: oracle throughput {total.oracle_throughput_bps:.1f} bit/s")
    return 0


def cmd_budget(args) -> int:
    b = args.buffer if args.buffer is not None else bud.min_buffer_size(args.sample_rate, args.t_cn)
    inputs = bud.BudgetInputs(args.sample_rate, b, args.t_buf, args.t_in, args.t_cn, args.t_out, args.switch_time)
    row = bud.budget_table(inputs)
    if args.json:
        print(json.dumps(row, indent=2, sort_keys=True))
    else:
        print(f"sample rate          S     = {row['sample_rate_hz']:g} samples/s")
        print(f"buffer               B     = {row['buffer_samples']} samples")
        print(f"total latency              = {row['total_latency_s'] * 1e3:g} ms")
        print(f"load                       = {row['load']:.6g} ({'feasible' if row['feasible'] else 'INFEASIBLE'})")
        print(f"buffer bound         B     > {row['buffer_bound_samples']} samples")
        print(f"switching time       T_sw  = {row['min_switch_time_s'] * 1e3:g} ms")
        print(f"expected misaligned        = {row['expected_misaligned_samples']:g} samples/switch")
        if "inferences_per_switch" in row:
            print(f"inferences per switch      = {row['inferences_per_switch']:g}")
            print(f"misaligned fraction        = {row['misaligned_fraction']:.4g}")
    return 0 if row["feasible"] else 1


# --- entry point ----------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML experiment file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field, e.g. train.epochs=5")
    p.add_argument("--seed", type=int, help=f"master seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polyrf", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="write a labelled tensor dataset")
    _common(p)
    p.add_argument("--name", default="dataset", help="file stem under --out")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", help="train RFNet on a dataset file")
    _common(p)
    p.add_argument("--data", required=True, help="dataset .iq file")
    p.add_argument("--holdout", type=float, default=0.2, help="held-out fraction")
    p.add_argument("--init", help="resume from these float weights")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("quantize", help="convert float weights to fixed point")
    p.add_argument("weights")
    p.add_argument("--format", default="fixed(32,10)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("eval", help="accuracy, float/fixed agreement and confusion matrix")
    p.add_argument("weights")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("float", "fixed", "both"), default="both")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="Poly vs Oracle throughput over seeded switching schedules")
    _common(p)
    p.add_argument("--weights")
    p.add_argument("--classifier", choices=("rfnet", "perfect"), default="rfnet")
    p.add_argument("--mode", choices=("float", "fixed"), default="fixed")
    p.add_argument("--oracle-only", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("budget", help="real-time feasibility table")
    p.add_argument("--sample-rate", type=float, required=True, help="S in samples/s")
    p.add_argument("--buffer", type=int, help="B in samples (default: smallest feasible)")
    p.add_argument("--t-cn", type=float, required=True, help="network latency, s")
    p.add_argument("--t-buf", type=float, default=0.0)
    p.add_argument("--t-in", type=float, default=0.0)
    p.add_argument("--t-out", type=float, default=0.0)
    p.add_argument("--switch-time", type=float, help="T_sw in s")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_budget)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, InsufficientDataError, TypeError, ValueError) as e:
        print(f"polyrf {args.command}: invalid input: {e}", file=sys.stderr)
        return 2
    except TrainingError as e:
        print(f"polyrf {args.command}: training failed: {e}", file=sys.stderr)
        return 3
    except (OSError, PolyrfError) as e:
        print(f"polyrf {args.command}: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
