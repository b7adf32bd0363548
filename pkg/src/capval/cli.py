"""Command-line surface: index, synth, score, fit, predict, scalefit, report.

Subcommands wrap the library modules, load RunConfig JSON, and emit plain
CSV/JSON artifacts plus optional SVG plots. Exit code is 0 iff there was
no configuration error and at least one requested unit succeeded.
"""

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from capval import caplaw, core, lossmeter, retrieval, svgplot
from capval.errors import (
    CapvalError,
    ConfigError,
    ConsistencyError,
    InsufficientDataError,
)
from capval.synthesis import client as llm_client
from capval.synthesis import pipeline

logger = logging.getLogger(__name__)

OBSERVATION_HEADER = ["model_id", "domain_id", "loss", "capability", "compute",
                      "tokens_seen", "stage"]


@dataclass
class RunConfig:
    """Parsed run configuration; paths already resolved against the config dir."""

    domains: list = field(default_factory=list)
    corpus_shards: list = field(default_factory=list)
    index_dir: str | None = None
    index_config: retrieval.IndexConfig = field(default_factory=retrieval.IndexConfig)
    endpoints: dict = field(default_factory=dict)
    output_dir: str = "capval-out"
    synthesis: dict = field(default_factory=dict)
    aggregation: str = "macro"

    def domain(self, domain_id: str):
        for d in self.domains:
            if d.id == domain_id:
                return d
        raise ConfigError(f"unknown domain id {domain_id!r}")


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    base = path.parent

    def resolve(p):
        p = Path(p)
        return str(p if p.is_absolute() else (base / p))

    cfg = RunConfig()
    if "domains" in doc:
        cfg.domains = core.load_domain_specs(path)
    corpus = doc.get("corpus", {})
    cfg.corpus_shards = [resolve(s) for s in corpus.get("shards", [])]
    if corpus.get("index_dir"):
        cfg.index_dir = resolve(corpus["index_dir"])
    if "index_config" in doc:
        cfg.index_config = retrieval.IndexConfig.from_json(doc["index_config"])
    cfg.endpoints = doc.get("endpoints", {})
    cfg.output_dir = resolve(doc.get("output_dir", "capval-out"))
    cfg.synthesis = doc.get("synthesis", {})
    cfg.aggregation = doc.get("aggregation", "macro")
    return cfg


def _chat_endpoint(cfg: RunConfig, role: str):
    spec = cfg.endpoints.get(role)
    if not spec or "base_url" not in spec or "model" not in spec:
        raise ConfigError(f"endpoint config for role {role!r} is missing or incomplete "
                          f"(needs base_url and model)")
    return llm_client.HttpChatEndpoint(llm_client.EndpointConfig(
        base_url=spec["base_url"], model=spec["model"],
        auth_env=spec.get("auth_env", ""), max_attempts=int(spec.get("max_attempts", 3)),
        timeout=float(spec.get("timeout", 120.0)),
    ))


def _scoring_endpoint(cfg: RunConfig):
    spec = cfg.endpoints.get("scoring")
    if not spec or "base_url" not in spec:
        raise ConfigError("scoring endpoint config is missing or incomplete (needs base_url)")
    return lossmeter.HttpScoringEndpoint(lossmeter.ScoringEndpointConfig(
        base_url=spec["base_url"], model=spec.get("model", ""),
        auth_env=spec.get("auth_env", ""), max_attempts=int(spec.get("max_attempts", 3)),
        timeout=float(spec.get("timeout", 120.0)),
        max_chars=spec.get("max_chars"),
    ))


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------- index


def cmd_index(args, cfg: RunConfig) -> int:
    shards = [str(p) for p in (args.shards or cfg.corpus_shards)]
    if not shards:
        raise ConfigError("no corpus shards given (use --shards or config corpus.shards)")
    for s in shards:
        if not Path(s).exists():
            raise ConfigError(f"corpus shard {s} does not exist")
    out_dir = args.index_dir or cfg.index_dir or str(Path(args.out or cfg.output_dir) / "index")
    index = retrieval.build_index(shards, out_dir, cfg.index_config, force=args.force)
    manifest = json.loads((Path(out_dir) / retrieval.MANIFEST_FILE).read_text(encoding="utf-8"))
    print(f"index written to {out_dir}")
    print(f"  documents: {manifest['doc_count']}")
    print(f"  passages:  {manifest['passage_count']}")
    print(f"  terms:     {manifest['term_count']}")
    print(f"  format:    {manifest['format']}")
    return 0 if index.passage_count > 0 else 1


# ---------------------------------------------------------------- synth


def cmd_synth(args, cfg: RunConfig) -> int:
    out_dir = Path(args.out or cfg.output_dir)
    domain_ids = args.domains or [d.id for d in cfg.domains]
    if not domain_ids:
        raise ConfigError("no domains configured")
    domains = [cfg.domain(d) for d in domain_ids]

    needs_llm = [d for d in domains if d.synthesis_mode in ("full", "retrieval_only")]
    index = None
    endpoints = None
    if needs_llm:
        if not cfg.index_dir:
            raise ConfigError("config corpus.index_dir is required for full/retrieval_only modes")
        index = retrieval.load_index(cfg.index_dir)
        generator = (_chat_endpoint(cfg, "generator")
                     if any(d.synthesis_mode == "full" for d in needs_llm) else None)
        endpoints = pipeline.EndpointSuite(
            extractor=_chat_endpoint(cfg, "extractor"),
            judge=_chat_endpoint(cfg, "judge"),
            generator=generator,
        )

    syn = cfg.synthesis
    seed = args.seed if args.seed is not None else int(syn.get("seed", 0))
    val_dir = out_dir / "validation"
    manifest: dict = {"domains": {}}
    succeeded = 0
    for domain in domains:
        config = pipeline.SynthesisConfig(
            hits_per_factor=int(syn.get("hits_per_factor", 8)),
            sample_cap=syn.get("sample_cap"),
            seed=seed,
            split_questions=bool(syn.get("split_questions", False)),
            max_concurrency=int(syn.get("max_concurrency", 1)),
            journal_path=str(out_dir / "journal" / f"{domain.id}.jsonl"),
        )
        result = pipeline.synthesize_domain(domain, index, endpoints, config)
        path = val_dir / f"{domain.id}.jsonl"
        pipeline.write_validation_set(result.samples, path)
        mean_len = (sum(len(s.text) for s in result.samples) / len(result.samples)
                    if result.samples else 0.0)
        manifest["domains"][domain.id] = {
            "mode": domain.synthesis_mode,
            "sample_count": len(result.samples),
            "mean_text_chars": round(mean_len, 2),
            "content_checksum": pipeline.samples_content_checksum(result.samples),
            "path": path.name,
            "report": result.report.to_json(),
        }
        if result.samples:
            succeeded += 1
        for failure in result.report.failures:
            print(f"  [warn] {domain.id}: {failure}", file=sys.stderr)

    val_dir.mkdir(parents=True, exist_ok=True)
    with open(val_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    print(f"{'Domain':<20} {'Sample Counts':>14} {'Average Sample Length':>24}")
    for did, entry in manifest["domains"].items():
        print(f"{did:<20} {entry['sample_count']:>14} {entry['mean_text_chars']:>24.2f}")
    print(f"validation sets written to {val_dir}")
    return 0 if succeeded > 0 else 1


# ---------------------------------------------------------------- score


def _read_observations(path: Path) -> list[dict]:
    rows = []
    if path.exists():
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    return rows


def _write_observations(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=OBSERVATION_HEADER)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in OBSERVATION_HEADER})


def _upsert_observation(rows: list[dict], new: dict) -> None:
    key = ("model_id", "domain_id", "tokens_seen", "stage")
    for i, row in enumerate(rows):
        if all(str(row.get(k, "")) == str(new.get(k, "")) for k in key):
            rows[i] = new
            return
    rows.append(new)


def cmd_score(args, cfg: RunConfig) -> int:
    out_dir = Path(args.out or cfg.output_dir)
    val_dir = Path(args.validation_dir) if args.validation_dir else out_dir / "validation"
    domain_ids = args.domains or [d.id for d in cfg.domains]
    for did in domain_ids:
        cfg.domain(did)  # validates the id
    endpoint = _scoring_endpoint(cfg)
    cache_path = out_dir / "cache" / f"{args.model_id}.jsonl"
    cache = lossmeter.load_loss_cache(cache_path)
    obs_path = out_dir / "observations.csv"
    rows = _read_observations(obs_path)

    succeeded = 0
    for did in domain_ids:
        val_path = val_dir / f"{did}.jsonl"
        if not val_path.exists():
            raise ConfigError(f"validation set {val_path} does not exist; run synth first")
        samples = pipeline.read_validation_set(val_path)
        losses = []
        failures = 0
        for sample in samples:
            key = (args.model_id, sample.id)
            if key in cache:
                losses.append(cache[key])
                continue
            try:
                sl = lossmeter.score_sample(endpoint, sample, model_id=args.model_id)
            except CapvalError as exc:
                failures += 1
                print(f"  [warn] scoring {sample.id}: {exc}", file=sys.stderr)
                continue
            lossmeter.append_loss_cache(cache_path, sl)
            cache[key] = sl
            losses.append(sl)
        if not losses:
            print(f"  [warn] domain {did}: no samples scored ({failures} failures)",
                  file=sys.stderr)
            continue
        loss = lossmeter.domain_loss(losses, mode=cfg.aggregation)
        capability = ""
        if args.capability is not None:
            domain = cfg.domain(did)
            capability = f"{core.clamp_capability(args.capability, domain.gamma, did):.6g}"
        compute = args.compute
        if compute is None and args.n_params is not None and args.tokens_seen is not None:
            compute = caplaw.compute_flops(args.n_params, args.tokens_seen)
        _upsert_observation(rows, {
            "model_id": args.model_id, "domain_id": did, "loss": f"{loss:.6f}",
            "capability": capability,
            "compute": "" if compute is None else f"{compute:g}",
            "tokens_seen": "" if args.tokens_seen is None else str(args.tokens_seen),
            "stage": args.stage or "",
        })
        print(f"{args.model_id} {did}: loss {loss:.4f} nats/token over {len(losses)} samples"
              + (f" ({failures} failed)" if failures else ""))
        succeeded += 1
    _write_observations(obs_path, rows)
    return 0 if succeeded > 0 else 1


# ------------------------------------------------------------------ fit


def _parse_gamma_overrides(pairs) -> dict[str, float]:
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--gamma expects domain=value, got {pair!r}")
        did, val = pair.split("=", 1)
        overrides[did] = float(val)
    return overrides


def cmd_fit(args, cfg: RunConfig) -> int:
    out_dir = Path(args.out or cfg.output_dir)
    obs_path = Path(args.observations) if args.observations else out_dir / "observations.csv"
    if not obs_path.exists():
        raise ConfigError(f"observations file {obs_path} does not exist")
    overrides = _parse_gamma_overrides(args.gamma)
    rows = _read_observations(obs_path)

    by_domain: dict[str, list[core.ModelObservation]] = {}
    for row in rows:
        if not row.get("capability"):
            continue
        did = row["domain_id"]
        gamma = overrides.get(did)
        if gamma is None:
            try:
                gamma = cfg.domain(did).gamma
            except ConfigError:
                gamma = 0.0
        by_domain.setdefault(did, []).append(core.ModelObservation(
            model_id=row["model_id"], domain_id=did, loss=float(row["loss"]),
            capability=core.clamp_capability(float(row["capability"]), gamma, did),
        ))

    domain_ids = args.domains or sorted(by_domain)
    fits_dir = out_dir / "fits"
    summary_rows = []
    succeeded = 0
    print(f"{'Domain':<20} {'N':>4} {'MSE':>12} {'P95':>12}")
    for did in domain_ids:
        obs = by_domain.get(did, [])
        gamma = overrides.get(did)
        if gamma is None:
            try:
                gamma = cfg.domain(did).gamma
            except ConfigError:
                gamma = 0.0
        try:
            fit = caplaw.fit_sigmoid(obs, gamma=gamma, domain_id=did, p95_kind=args.p95_kind)
        except InsufficientDataError as exc:
            print(f"{did:<20} skipped: {exc}", file=sys.stderr)
            continue
        fits_dir.mkdir(parents=True, exist_ok=True)
        artifact = fit.to_json()
        artifact["provenance"] = {
            "observations_file": str(obs_path),
            "observations_sha256": _sha256_file(obs_path),
            "p95_kind": args.p95_kind,
        }
        with open(fits_dir / f"{did}.json", "w", encoding="utf-8") as fh:
            json.dump(artifact, fh, indent=2, sort_keys=True)
            fh.write("\n")
        summary_rows.append({"domain_id": did, "n_points": fit.n_points,
                             "alpha": f"{fit.alpha:.6g}", "beta": f"{fit.beta:.6g}",
                             "gamma": f"{fit.gamma:.6g}", "mse": f"{fit.mse:.6e}",
                             "p95": f"{fit.p95:.6e}"})
        print(f"{did:<20} {fit.n_points:>4} {fit.mse:>12.4e} {fit.p95:>12.4e}")
        if args.svg:
            losses = [o.loss for o in obs]
            caps = [o.capability for o in obs]
            lo, hi = min(losses), max(losses)
            pad = 0.1 * (hi - lo or 1.0)
            curve_x = [lo - pad + i * (hi - lo + 2 * pad) / 199 for i in range(200)]
            curve_y = [caplaw.predict_capability(x, fit) for x in curve_x]
            svgplot.scatter_with_curve(
                fits_dir / f"{did}.svg", losses, caps, curve_x, curve_y,
                title=f"{did}: capability vs loss",
                xlabel="validation loss (nats/token)", ylabel="capability")
        succeeded += 1
    if summary_rows:
        with open(fits_dir / "summary.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(summary_rows[0]))
            writer.writeheader()
            writer.writerows(summary_rows)
    return 0 if succeeded > 0 else 1


# -------------------------------------------------------------- predict


def _load_fit(path) -> caplaw.SigmoidFit:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"fit artifact {path} does not exist")
    return caplaw.SigmoidFit.from_json(json.loads(path.read_text(encoding="utf-8")))


def cmd_predict(args, cfg: RunConfig) -> int:
    out_dir = Path(args.out or cfg.output_dir)
    fit = _load_fit(args.fit)
    out_rows = []
    if args.loss:
        for loss in args.loss:
            out_rows.append({"model_id": "", "domain_id": fit.domain_id, "tokens_seen": "",
                             "stage": "", "loss": f"{loss:.6f}",
                             "capability": f"{caplaw.predict_capability(loss, fit):.6f}"})
    elif args.loss_log:
        series = lossmeter.ingest_loss_log(args.loss_log)
        selected = {key: pts for key, pts in series.items()
                    if key[1] == fit.domain_id and key[2] == args.metric
                    and (args.model is None or key[0] == args.model)}
        if not selected:
            raise ConsistencyError(
                f"loss log has no series for domain {fit.domain_id!r} with metric "
                f"{args.metric!r}")
        for (model_id, _domain, _metric), pts in sorted(selected.items()):
            for p in pts:
                out_rows.append({"model_id": model_id, "domain_id": fit.domain_id,
                                 "tokens_seen": p.tokens_seen, "stage": p.stage,
                                 "loss": f"{p.loss:.6f}",
                                 "capability": f"{caplaw.predict_capability(p.loss, fit):.6f}"})
            stages = {p.stage for p in pts}
            if len(stages) == 2:
                report = caplaw.stage_gap(pts)
                print(f"stage gap for {model_id}/{fit.domain_id}: "
                      f"{report.gap:.6f} nats/token at {report.transition_tokens:.3e} tokens "
                      f"(stderr {report.gap_stderr:.2e})")
                out_dir.mkdir(parents=True, exist_ok=True)
                with open(out_dir / f"stage_gap_{model_id}_{fit.domain_id}.json", "w",
                          encoding="utf-8") as fh:
                    json.dump(report.to_json(), fh, indent=2, sort_keys=True)
                    fh.write("\n")
    else:
        raise ConfigError("predict needs --loss values or a --loss-log file")

    out_dir.mkdir(parents=True, exist_ok=True)
    pred_path = out_dir / "predictions.csv"
    with open(pred_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["model_id", "domain_id", "tokens_seen",
                                                "stage", "loss", "capability"])
        writer.writeheader()
        writer.writerows(out_rows)
    for row in out_rows:
        print(f"loss {row['loss']} -> capability {row['capability']}")
    print(f"predictions written to {pred_path}")
    return 0 if out_rows else 1


# ------------------------------------------------------------- scalefit


def cmd_scalefit(args, cfg: RunConfig) -> int:
    out_dir = Path(args.out or cfg.output_dir)
    path = Path(args.csv)
    if not path.exists():
        raise ConfigError(f"compute-loss CSV {path} does not exist")
    series: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if "compute" not in cols or "loss" not in cols:
            raise ConfigError(f"{path}: needs 'compute' and 'loss' columns")
        series_col = "series" if "series" in cols else ("model_id" if "model_id" in cols else None)
        for row in reader:
            key = row[series_col] if series_col else "all"
            series.setdefault(key, []).append((float(row["compute"]), float(row["loss"])))

    scale_dir = out_dir / "scalefit"
    succeeded = 0
    print(f"{'Series':<20} {'N':>4} {'slope':>12} {'intercept':>12} {'r^2':>8}")
    for key in sorted(series):
        pts = series[key]
        try:
            fit = caplaw.fit_loglinear(pts, series_id=key)
        except (InsufficientDataError, CapvalError) as exc:
            print(f"{key:<20} skipped: {exc}", file=sys.stderr)
            continue
        scale_dir.mkdir(parents=True, exist_ok=True)
        with open(scale_dir / f"{key}.json", "w", encoding="utf-8") as fh:
            json.dump(fit.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"{key:<20} {fit.n_points:>4} {fit.slope:>12.6g} {fit.intercept:>12.6g} "
              f"{fit.r_squared:>8.4f}")
        if args.svg:
            xs = [c for c, _ in pts]
            ys = [loss for _, loss in pts]
            curve_x = sorted(xs)
            curve_y = [fit.predict(x) for x in curve_x]
            svgplot.scatter_with_curve(scale_dir / f"{key}.svg", xs, ys, curve_x, curve_y,
                                       title=f"{key}: loss vs compute",
                                       xlabel="compute (FLOPs, log scale)",
                                       ylabel="loss (nats/token)", logx=True)
        succeeded += 1
    return 0 if succeeded > 0 else 1


# --------------------------------------------------------------- report


def cmd_report(args, cfg: RunConfig) -> int:
    run_dir = Path(args.run_dir or args.out or cfg.output_dir)
    report: dict = {}
    manifest_path = run_dir / "validation" / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        report["validation"] = manifest
        print("validation sets:")
        print(f"  {'Domain':<20} {'Sample Counts':>14} {'Average Sample Length':>24}")
        for did, entry in manifest["domains"].items():
            print(f"  {did:<20} {entry['sample_count']:>14} {entry['mean_text_chars']:>24.2f}")
    obs_path = run_dir / "observations.csv"
    if obs_path.exists():
        rows = _read_observations(obs_path)
        report["observations"] = rows
        print(f"observations: {len(rows)} rows in {obs_path}")
    summary_path = run_dir / "fits" / "summary.csv"
    if summary_path.exists():
        with open(summary_path, newline="", encoding="utf-8") as fh:
            fit_rows = list(csv.DictReader(fh))
        report["fits"] = fit_rows
        print("fits:")
        print(f"  {'Domain':<20} {'MSE':>12} {'P95':>12}")
        for row in fit_rows:
            print(f"  {row['domain_id']:<20} {float(row['mse']):>12.4e} "
                  f"{float(row['p95']):>12.4e}")
    if not report:
        print(f"no artifacts found under {run_dir}", file=sys.stderr)
        return 1
    with open(run_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"combined report written to {run_dir / 'report.json'}")
    return 0


# ----------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capval",
        description="Synthesize capability-aligned validation sets, score models on them, "
                    "and fit loss-to-capability / compute-to-loss laws.")
    parser.add_argument("--config", help="run config JSON")
    parser.add_argument("--seed", type=int, default=None, help="seed override for synthesis")
    parser.add_argument("--out", help="output directory override")
    parser.add_argument("--force", action="store_true", help="overwrite existing artifacts")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build the corpus passage index")
    p.add_argument("--shards", nargs="*", help="corpus shard files (txt or JSONL)")
    p.add_argument("--index-dir", help="index output directory")
    p.set_defaults(fn=cmd_index)

    p = sub.add_parser("synth", help="synthesize validation sets")
    p.add_argument("--domains", nargs="*", help="domain ids (default: all configured)")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("score", help="score a model's loss on validation sets")
    p.add_argument("--model-id", required=True)
    p.add_argument("--domains", nargs="*")
    p.add_argument("--validation-dir")
    p.add_argument("--capability", type=float, default=None,
                   help="benchmark-derived capability proxy for this model/domain")
    p.add_argument("--compute", type=float, default=None, help="training FLOPs")
    p.add_argument("--n-params", type=float, default=None,
                   help="parameter count; with --tokens-seen derives compute as 6*N*D")
    p.add_argument("--tokens-seen", type=int, default=None)
    p.add_argument("--stage", default="")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("fit", help="fit the loss-to-capability sigmoid per domain")
    p.add_argument("--observations", help="observation CSV (default <out>/observations.csv)")
    p.add_argument("--domains", nargs="*")
    p.add_argument("--gamma", nargs="*", metavar="DOMAIN=VALUE",
                   help="chance-floor overrides")
    p.add_argument("--p95-kind", choices=["std", "mean_abs"], default="std")
    p.add_argument("--svg", action="store_true", help="emit scatter+curve SVG per domain")
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("predict", help="predict capability from loss via a fit artifact")
    p.add_argument("--fit", required=True, help="fit artifact JSON")
    p.add_argument("--loss", nargs="*", type=float, help="loss values to map")
    p.add_argument("--loss-log", help="mid-training loss log CSV")
    p.add_argument("--metric", choices=list(lossmeter.LOSS_METRICS), default="supervalid")
    p.add_argument("--model", help="restrict loss-log series to one model")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("scalefit", help="fit the log-linear compute-to-loss law")
    p.add_argument("--csv", required=True, help="CSV with compute,loss[,series] columns")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(fn=cmd_scalefit)

    p = sub.add_parser("report", help="print and save a combined run report")
    p.add_argument("--run-dir", help="run directory (default --out / config output_dir)")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args.config) if args.config else RunConfig()
        return args.fn(args, cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CapvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
