"""Stage-per-subcommand frontend for the selection and monitoring pipeline.

Every stage reads/writes the dataio formats, so runs are scriptable and
re-runnable: identical inputs and seed produce byte-identical artifacts.
Exit codes: 0 success, 2 invalid input, 1 internal error, and 3 from
``monitor`` when at least one shift trigger fired (so schedulers can
branch on it).
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import clustering, dataio, mismatch, monitor, sampler, simgen
from .core import (
    AdapterRegistry,
    Assignment,
    CompassError,
    Dataset,
    resolve_adapter,
    validate_dataset,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INVALID_INPUT = 2
EXIT_TRIGGER_FIRED = 3

# (name, default, domain check, provenance note for --help)
TUNABLES = [
    ("budget", 0.8, lambda v: v > 0, "auxiliary-to-target size ratio; 0.8 is the tuned default"),
    ("epsilon", 1.0, lambda v: v > 0, "smoothing constant in the cluster weight n_eval/(n_t+eps)"),
    ("tau_sim", 0.90, lambda v: 0 < v < 1, "near-duplicate similarity threshold for the diversity penalty"),
    ("delta", 0.20, lambda v: v >= 0, "score penalty per already-selected near-duplicate neighbor"),
    ("theta_js", 0.15, lambda v: 0 < v < 1, "divergence trigger threshold; 0.15 balances misses and false fires"),
    ("eta", 0.1, lambda v: 0 <= v <= 1, "incremental centroid learning rate"),
    ("window_size", 1000, lambda v: v >= 1, "monitoring window capacity in samples"),
    ("increment", 500, lambda v: v >= 1, "samples between trigger assessments"),
    ("anchor_fraction", 0.05, lambda v: 0 <= v <= 1, "rehearsal buffer share; returns diminish beyond 5%"),
    ("lambda", 2.0, lambda v: v >= 0, "consolidation strength in the update recipe"),
    ("beta", 0.1, lambda v: v >= 0, "anchor replay weight in the update recipe"),
    ("epochs", 5, lambda v: v >= 1, "update-cycle training epochs"),
    ("seed", 0, lambda v: True, "master RNG seed; COMPASS_SEED overrides"),
]


@dataclass
class RunConfig:
    paths: dict[str, str] = field(default_factory=dict)
    values: dict[str, float] = field(default_factory=dict)
    clustering: dict = field(default_factory=dict)
    gen: dict = field(default_factory=dict)
    registry: dict = field(default_factory=dict)
    replacement_mode: bool = False
    lang_detect_cmd: list[str] | None = None

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        doc = dataio.read_json(path)
        values = {}
        for name, default, check, _ in TUNABLES:
            v = doc.get(name, default)
            if not check(v):
                raise CompassError(f"config value {name}={v!r} outside its domain")
            values[name] = v
        env_seed = os.environ.get("COMPASS_SEED")
        if env_seed is not None:
            values["seed"] = int(env_seed)
        return cls(
            paths=dict(doc.get("paths", {})),
            values=values,
            clustering=dict(doc.get("clustering", {})),
            gen=dict(doc.get("gen", {})),
            registry=dict(doc.get("registry", {})),
            replacement_mode=bool(doc.get("replacement_mode", False)),
            lang_detect_cmd=doc.get("lang_detect_cmd"),
        )

    def path(self, key: str, default: str | None = None) -> Path:
        out_dir = Path(self.paths.get("out_dir", "."))
        if key in self.paths:
            return Path(self.paths[key])
        if default is None:
            raise CompassError(f"config is missing required path {key!r}")
        return out_dir / default

    @property
    def seed(self) -> int:
        return int(self.values["seed"])


def _load_dataset(cfg: RunConfig, records_key="records", embeddings_key="embeddings") -> Dataset:
    records_path = cfg.path(records_key)
    embeddings_path = cfg.path(embeddings_key)
    for p in (records_path, embeddings_path):
        if not Path(p).exists():
            raise FileNotFoundError(f"input file not found: {p}")
    records = dataio.read_records(records_path)
    embeddings = dataio.read_embeddings(embeddings_path)
    return Dataset(tuple(records), embeddings)


def _load_model_and_assignment(cfg: RunConfig):
    model = dataio.load_cluster_model(cfg.path("cluster_model", "cluster_model.json"))
    labels = dataio.load_assignment_labels(cfg.path("assignments", "assignments.json"))
    return model, Assignment(labels=labels, source_model=model)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(cfg: RunConfig) -> int:
    spec = simgen.BlobSpec(
        n_clusters=int(cfg.gen.get("n_clusters", 5)),
        points_per_cluster=int(cfg.gen.get("points_per_cluster", 50)),
        dim=int(cfg.gen.get("dim", 8)),
        spread=float(cfg.gen.get("spread", 0.05)),
        seed=cfg.seed,
    )
    roles = cfg.gen.get("roles", {"target": 0.2, "aux": 0.6, "eval": 0.2})
    ds, labels = simgen.gen_blobs(spec)
    rng = np.random.default_rng(cfg.seed)
    names, probs = zip(*sorted(roles.items()))
    assigned_roles = rng.choice(len(names), size=len(ds), p=np.asarray(probs) / sum(probs))
    records = [
        type(rec)(id=rec.id, lang=rec.lang, role=names[assigned_roles[i]],
                  subject=f"s{labels[i]}", text=rec.text)
        for i, rec in enumerate(ds.records)
    ]
    out_records = cfg.path("records", "records.jsonl")
    out_embeddings = cfg.path("embeddings", "embeddings.bin")
    dataio.write_records(records, out_records)
    dataio.write_embeddings(ds.embeddings, out_embeddings)
    print(f"wrote {len(records)} records -> {out_records}")
    print(f"wrote embeddings -> {out_embeddings}")
    return EXIT_OK


def cmd_ingest(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    violations = validate_dataset(ds)
    if violations:
        for v in violations:
            print(f"violation [{v.kind}] rows={list(v.rows)}: {v.detail}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    dataio.write_records(ds.records, cfg.path("validated_records", "validated_records.jsonl"))
    dataio.write_embeddings(ds.embeddings, cfg.path("validated_embeddings", "validated_embeddings.bin"))
    print(f"ingested {len(ds)} records; 0 violations")
    return EXIT_OK


def cmd_cluster(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    method = cfg.clustering.get("method", "kmeans")
    cc = cfg.clustering
    if method == "kmeans":
        k_range = (int(cc.get("k_min", 10)), int(cc.get("k_max", 120)), int(cc.get("k_step", 5)))
        model, reports = clustering.fit_kmeans(
            ds.embeddings, k_range=k_range,
            seeds_per_k=int(cc.get("seeds_per_k", 10)), rng_seed=cfg.seed,
        )
    elif method == "agglomerative":
        k_range = (int(cc.get("k_min", 80)), int(cc.get("k_max", 120)), int(cc.get("k_step", 1)))
        model, reports = clustering.fit_agglomerative(ds.embeddings, k_range=k_range)
    elif method == "density":
        grid = {
            "min_cluster_size": cc.get("min_cluster_sizes", [5, 10, 15, 20]),
            "min_samples": cc.get("min_samples", [1, 5, 10]),
        }
        model, reports = clustering.fit_density(ds.embeddings, grid=grid)
    elif method == "butina":
        model, reports = clustering.fit_taylor_butina(
            ds.embeddings,
            t_min=float(cc.get("t_min", 0.70)),
            t_max=float(cc.get("t_max", 0.95)),
            coverage=float(cc.get("coverage", 0.95)),
        )
    else:
        raise CompassError(f"unknown clustering method {method!r}")
    asn = clustering.assign(ds.embeddings, model)
    dataio.save_cluster_model(model, cfg.path("cluster_model", "cluster_model.json"))
    dataio.save_assignment(asn, cfg.path("assignments", "assignments.json"))
    noise = float(np.mean(asn.labels < 0))
    print(f"method={method} k={model.k} noise_fraction={noise:.3f}")
    for r in reports:
        score = r.silhouette if r.silhouette is not None else r.dbcv
        tag = "sil" if r.silhouette is not None else "dbcv"
        shown = "n/a" if score is None else f"{score:.4f}"
        print(f"  {r.params} -> {tag}={shown} clusters={r.n_clusters}")
    return EXIT_OK


def cmd_mismatch(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    _model, asn = _load_model_and_assignment(cfg)
    counts = mismatch.tabulate_counts(ds, asn)
    profile = mismatch.mismatch_profile(counts, epsilon=float(cfg.values["epsilon"]))
    dataio.persist_artifact(profile, cfg.path("profile", "mismatch_profile.json"))
    print(f"clusters={profile.k} no_eval_signal={profile.no_eval_signal}")
    print(f"w_norm={['%.4f' % v for v in profile.w_norm]}")
    return EXIT_OK


def cmd_sample(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    _model, asn = _load_model_and_assignment(cfg)
    profile = dataio.load_artifact(cfg.path("profile", "mismatch_profile.json"), "mismatch_profile")
    scfg = sampler.SamplerConfig(
        budget=float(cfg.values["budget"]),
        tau_sim=float(cfg.values["tau_sim"]),
        delta=float(cfg.values["delta"]),
        seed=cfg.seed,
        replacement_mode=cfg.replacement_mode,
    )
    plan = sampler.run_sampling(ds, asn, profile, scfg)
    dataio.persist_artifact(plan, cfg.path("plan", "sampling_plan.json"))
    dataio.write_json(sampler.build_manifest(plan, ds), cfg.path("manifest", "manifest.json"))
    _print_selection_summary(ds, asn, profile, plan)
    return EXIT_OK


def _print_selection_summary(ds, asn, profile, plan) -> None:
    from collections import Counter

    per_cluster = Counter(s.cluster for s in plan.selections)
    print(f"{'cluster':>7} {'quota':>6} {'picked':>7} {'fill':>6}")
    for k in range(profile.k):
        q = plan.quotas[k]
        got = per_cluster.get(k, 0)
        fill = "  n/a" if q == 0 else f"{got / q:5.0%}"
        print(f"{k:>7} {q:>6} {got:>7} {fill:>6}")
    if plan.underfilled:
        for k, short in enumerate(plan.shortfall):
            if short > 0:
                print(f"warning: cluster {k} underfilled by {short}")
    pre = np.asarray(profile.n_t, dtype=float)
    post = pre + np.array([per_cluster.get(k, 0) for k in range(profile.k)], dtype=float)
    ev = np.asarray(profile.n_eval, dtype=float)
    if pre.sum() > 0 and ev.sum() > 0:
        js_pre = monitor.js_divergence(pre / pre.sum(), ev / ev.sum())
        js_post = monitor.js_divergence(post / post.sum(), ev / ev.sum())
        print(f"train-vs-eval divergence: before={js_pre:.4f} after={js_post:.4f}")


def cmd_pipeline(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    violations = validate_dataset(ds)
    if violations:
        for v in violations:
            print(f"violation [{v.kind}] rows={list(v.rows)}: {v.detail}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    rc = cmd_cluster(cfg)
    if rc != EXIT_OK:
        return rc
    rc = cmd_mismatch(cfg)
    if rc != EXIT_OK:
        return rc
    return cmd_sample(cfg)


def cmd_monitor(cfg: RunConfig) -> int:
    model, _asn = _load_model_and_assignment(cfg)
    profile = dataio.load_artifact(cfg.path("profile", "mismatch_profile.json"), "mismatch_profile")
    plan = dataio.load_artifact(cfg.path("plan", "sampling_plan.json"), "sampling_plan")
    from collections import Counter

    selected_per = Counter(s.cluster for s in plan.selections)
    n_selected = [selected_per.get(k, 0) for k in range(profile.k)]
    p_ref = monitor.build_reference(profile.n_eval, n_selected)
    state = monitor.MonitorState(
        p_ref,
        n_clusters=profile.k,
        window_size=int(cfg.values["window_size"]),
        theta_js=float(cfg.values["theta_js"]),
        eta=float(cfg.values["eta"]),
    )
    stream_records_path = cfg.path("stream_records")
    stream_embeddings_path = cfg.path("stream_embeddings")
    stream = Dataset(
        tuple(dataio.read_records(stream_records_path)),
        dataio.read_embeddings(stream_embeddings_path),
    )
    labels = clustering.assign(stream.embeddings, model).labels
    increment = int(cfg.values["increment"])
    audit_path = cfg.path("audit_log", "trigger_audit.jsonl")
    fired_any = False
    audit_lines = []
    if len(stream) == 0:
        print("note: window-empty (no stream records)")
    for i, (rec, lbl) in enumerate(zip(stream.records, labels)):
        state.observe(rec.id, int(lbl))
        if (i + 1) % increment == 0:
            result = state.check_trigger()
            audit_lines.append(
                json.dumps(
                    {
                        "index": state.observed,
                        "js": result.js,
                        "theta": state.theta_js,
                        "fired": result.fired,
                    },
                    sort_keys=True,
                )
            )
            if result.fired:
                fired_any = True
                print(f"trigger fired at sample {state.observed}: js={result.js:.4f}")
                state.complete_update_cycle()
    with open(audit_path, "a", encoding="utf-8") as fh:
        for line in audit_lines:
            fh.write(line + "\n")
    dataio.persist_artifact(state, cfg.path("monitor_state", "monitor_state.json"))
    print(f"observed={state.observed} triggers={len(state.triggers)}")
    return EXIT_TRIGGER_FIRED if fired_any else EXIT_OK


def cmd_anchors(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    model, asn = _load_model_and_assignment(cfg)
    # anchors come from the previous training set: target plus selected aux
    manifest = dataio.read_json(cfg.path("manifest", "manifest.json"))
    training_ids = set(manifest["target_ids"]) | set(manifest["selected_ids"])
    keep = [i for i, rec in enumerate(ds.records) if rec.id in training_ids]
    train_ds = ds.subset(keep)
    train_asn = Assignment(labels=asn.labels[keep], source_model=model)
    buf = monitor.select_anchors(
        train_ds, train_asn, model, fraction=float(cfg.values["anchor_fraction"])
    )
    dataio.persist_artifact(buf, cfg.path("anchors", "anchor_buffer.json"))
    print(f"selected {len(buf.anchors)} anchors at fraction {buf.fraction}")
    return EXIT_OK


def cmd_recipe(cfg: RunConfig) -> int:
    plan = dataio.load_artifact(cfg.path("plan", "sampling_plan.json"), "sampling_plan")
    buf = dataio.load_artifact(cfg.path("anchors", "anchor_buffer.json"), "anchor_buffer")
    manifest_path = cfg.path("manifest", "manifest.json")
    manifest = dataio.read_json(manifest_path)
    training_ids = set(manifest["target_ids"]) | set(manifest["selected_ids"])
    recipe = monitor.emit_recipe(
        plan,
        buf,
        lam=float(cfg.values["lambda"]),
        beta=float(cfg.values["beta"]),
        manifest_path=str(manifest_path),
        training_ids=training_ids,
        epochs=int(cfg.values["epochs"]),
    )
    dataio.persist_artifact(recipe, cfg.path("recipe", "training_recipe.json"))
    print(f"recipe: lambda={recipe.lam} beta={recipe.beta} anchors={len(recipe.anchor_ids)}")
    return EXIT_OK


def _detect_lang(cfg: RunConfig, text: str) -> str:
    if not cfg.lang_detect_cmd:
        raise CompassError("record has no lang and no lang_detect_cmd is configured")
    out = subprocess.run(
        list(cfg.lang_detect_cmd), input=text, capture_output=True, text=True, check=True
    )
    return out.stdout.strip()


def cmd_route(cfg: RunConfig) -> int:
    reg = AdapterRegistry(
        entries=cfg.registry.get("entries", {}),
        default_adapter=cfg.registry.get("default_adapter"),
        base_model=cfg.registry.get("base_model"),
    )
    records = dataio.read_records(cfg.path("records"))
    target_langs = {r.lang for r in records if r.role == "target"}
    for rec in records:
        lang = rec.lang or _detect_lang(cfg, rec.text or "")
        adapter = resolve_adapter(lang, reg, has_target_data=lang in target_langs)
        print(f"{rec.id}\t{lang}\t{adapter}")
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "ingest": cmd_ingest,
    "cluster": cmd_cluster,
    "mismatch": cmd_mismatch,
    "sample": cmd_sample,
    "pipeline": cmd_pipeline,
    "monitor": cmd_monitor,
    "anchors": cmd_anchors,
    "recipe": cmd_recipe,
    "route": cmd_route,
}


def build_parser() -> argparse.ArgumentParser:
    tunable_help = "\n".join(
        f"  {name:<16} default={default!r:<8} {note}" for name, default, _, note in TUNABLES
    )
    parser = argparse.ArgumentParser(
        prog="compass",
        description="Distribution-guided auxiliary data selection and drift monitoring.",
        epilog="Config tunables (set in the config file):\n" + tunable_help,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "gen": "generate a synthetic blob fixture (records + embeddings)",
        "ingest": "validate a records/embeddings pair and re-emit canonical copies",
        "cluster": "fit the configured clustering method and assign all records",
        "mismatch": "tabulate per-cluster role counts and the gap profile",
        "sample": "run budget-constrained selection; writes plan + manifest",
        "pipeline": "ingest -> cluster -> mismatch -> sample in one run",
        "monitor": "consume a stream, assess the divergence trigger, snapshot state",
        "anchors": "select the rehearsal anchor buffer",
        "recipe": "emit the update-cycle training recipe",
        "route": "resolve the serving adapter for each input record",
    }
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=descriptions[name])
        p.add_argument("--config", required=True, help="path to the run config (JSON)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        return COMMANDS[args.command](cfg)
    except (CompassError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
