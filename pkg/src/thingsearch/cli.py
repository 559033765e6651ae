"""Command-line entry points for the offline pipeline.

Every command writes versioned artifacts plus a manifest (resolved config,
seeds, sha256 digests of inputs) sufficient to reproduce the run; artifact
bodies carry no timestamps, so reruns with equal inputs are byte-identical.
Failures print a machine-readable JSON error to stderr and remove partial
outputs. Option precedence: command-line flags, then --config file entries,
then built-in defaults.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import analysis, dataio, pipeline
from .encoder import fit_gmm
from .errors import ConfigError, ThingSearchError
from .grammar import fit_boundaries, histogram_from_syntax
from .retrieval import KIND_BLOCKS, KIND_STATEMENTS, build_scene_profile, fit_prior
from .windows import FULL_MASK, SyntaxMatrix

DEFAULTS = {
    "bins": 3,
    "components": 1024,
    "seed": 0,
    "alpha": 1.0,
    "holdout_per_class": pipeline.DEFAULT_HOLDOUT_PER_CLASS,
    "statements_per_class": pipeline.DEFAULT_STATEMENTS_PER_CLASS,
    "illustrations_per_class": pipeline.DEFAULT_ILLUSTRATIONS_PER_CLASS,
    "analysis_bins": 10,
    "per_class": 100,
    "limit": 20,
    "mode": "statements",
}


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved numeric knobs shared by the pipeline commands."""

    bins: int
    components: int
    seed: int
    alpha: float
    holdout_per_class: int
    statements_per_class: int
    illustrations_per_class: int
    properties: Optional[tuple[str, ...]] = None
    binary_dap: bool = False

    @property
    def mask(self):
        if self.properties is None:
            return FULL_MASK
        return analysis.restrict_properties(self.properties)


class _Run:
    """Tracks written artifacts so failures can clean up partial outputs."""

    def __init__(self):
        self.outputs: list[Path] = []

    def path(self, p) -> Path:
        p = Path(p)
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(p)
        return p

    def discard_outputs(self):
        for p in self.outputs:
            try:
                p.unlink(missing_ok=True)
            except OSError:
                pass


def _load_config_file(path: Optional[str]) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        loaded = json.load(fh)
    if not isinstance(loaded, dict):
        raise ConfigError(f"{path}: config file must hold a JSON object")
    return loaded


def _resolve(args: argparse.Namespace, config: dict, key: str, default=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return DEFAULTS.get(key, default)


def _resolve_pipeline_config(args: argparse.Namespace, config: dict) -> PipelineConfig:
    properties = _resolve(args, config, "properties")
    if isinstance(properties, str):
        properties = tuple(p.strip() for p in properties.split(",") if p.strip())
    return PipelineConfig(
        bins=int(_resolve(args, config, "bins")),
        components=int(_resolve(args, config, "components")),
        seed=int(_resolve(args, config, "seed")),
        alpha=float(_resolve(args, config, "alpha")),
        holdout_per_class=int(_resolve(args, config, "holdout_per_class")),
        statements_per_class=int(_resolve(args, config, "statements_per_class")),
        illustrations_per_class=int(_resolve(args, config, "illustrations_per_class")),
        properties=tuple(properties) if properties else None,
        binary_dap=bool(_resolve(args, config, "binary_dap", False)),
    )


def _write_manifest(run: _Run, directory: Path, command: str, config: dict,
                    inputs: Sequence[Path]) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): dataio.file_digest(p) for p in inputs},
        "outputs": sorted(str(p.name) for p in run.outputs),
    }
    path = run.path(directory / "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _holdout_records(args, cfg: PipelineConfig, records):
    if getattr(args, "holdout_split", False):
        holdout, _ = pipeline.split_by_scene(records, cfg.holdout_per_class, cfg.seed)
        return holdout
    return records


# --- commands -------------------------------------------------------------------

def cmd_synth(args, config, run: _Run) -> int:
    per_class = int(_resolve(args, config, "per_class"))
    seed = int(_resolve(args, config, "seed"))
    archetypes = tuple((_resolve(args, config, "archetypes")
                        or ",".join(dataio.ARCHETYPES)).split(","))
    records = dataio.generate_synthetic(archetypes, per_class, seed)
    out = run.path(args.out)
    dataio.save_windows(records, out)
    _write_manifest(run, out.parent, "synth",
                    {"archetypes": list(archetypes), "per_class": per_class, "seed": seed},
                    inputs=[])
    print(f"wrote {len(records)} records to {out}")
    return 0


def cmd_fit_bins(args, config, run: _Run) -> int:
    cfg = _resolve_pipeline_config(args, config)
    records = dataio.load_windows(args.windows)
    holdout = _holdout_records(args, cfg, records)
    syntaxes = [pipeline.syntax_from_record(r) for r in holdout]
    boundaries = fit_boundaries(syntaxes, cfg.bins)
    prior = fit_prior((histogram_from_syntax(s, boundaries, cfg.mask) for s in syntaxes),
                      cfg.alpha)
    out_dir = Path(args.out_dir)
    dataio.save_boundaries(run.path(out_dir / "boundaries.json"), boundaries)
    dataio.save_prior(run.path(out_dir / "priors.json"), prior)
    _write_manifest(run, out_dir, "fit-bins", asdict(cfg), inputs=[Path(args.windows)])
    print(f"fitted B={cfg.bins} boundaries and priors on {len(holdout)} images")
    return 0


def cmd_fit_gmm(args, config, run: _Run) -> int:
    cfg = _resolve_pipeline_config(args, config)
    records = dataio.load_windows(args.windows)
    holdout = _holdout_records(args, cfg, records)
    syntaxes = [pipeline.syntax_from_record(r) for r in holdout]
    model = fit_gmm(syntaxes, cfg.components, seed=cfg.seed, mask=cfg.mask)
    out_dir = Path(args.out_dir)
    dataio.save_gmm(run.path(out_dir / "gmm.json"), model)
    _write_manifest(run, out_dir, "fit-gmm", asdict(cfg), inputs=[Path(args.windows)])
    print(f"fitted K={cfg.components} GMM on {len(holdout)} images "
          f"({model.n_iterations} iterations, converged={model.converged})")
    return 0


def cmd_profile(args, config, run: _Run) -> int:
    scene_id = args.scene_id or "query"
    inputs = []
    if args.by == "statements":
        if not args.statements or not args.boundaries:
            raise ConfigError("profile --by statements needs --statements and --boundaries")
        boundaries = dataio.load_boundaries(args.boundaries)
        with open(args.statements, "r", encoding="utf-8") as fh:
            texts = [line.strip() for line in fh if line.strip()]
        profile = build_scene_profile(texts, KIND_STATEMENTS, boundaries, scene_id=scene_id)
        inputs = [Path(args.statements), Path(args.boundaries)]
    else:
        if not args.blocks or not args.gmm:
            raise ConfigError("profile --by blocks needs --blocks and --gmm")
        gmm = dataio.load_gmm(args.gmm)
        records = dataio.load_windows(args.blocks)
        illustrations = [pipeline.syntax_from_record(r) for r in records]
        profile = build_scene_profile(illustrations, KIND_BLOCKS, gmm, scene_id=scene_id)
        inputs = [Path(args.blocks), Path(args.gmm)]
    out = run.path(args.out)
    dataio.save_profile(out, profile)
    _write_manifest(run, out.parent, "profile",
                    {"by": args.by, "scene_id": scene_id}, inputs=inputs)
    print(f"wrote {args.by} profile {scene_id} to {out}")
    return 0


def cmd_query(args, config, run: _Run) -> int:
    from .service import load_index_dir

    limit = int(_resolve(args, config, "limit"))
    index, _ = load_index_dir(args.index_dir)
    statement_scores = None
    block_scores = None
    if args.by in ("statements", "fused"):
        if not args.statements:
            raise ConfigError(f"query --by {args.by} needs --statements")
        with open(args.statements, "r", encoding="utf-8") as fh:
            texts = [line.strip() for line in fh if line.strip()]
        profile = build_scene_profile(texts, KIND_STATEMENTS, index.boundaries)
        statement_scores = pipeline.score_statements(index, profile)
    if args.by in ("blocks", "fused"):
        if not args.blocks:
            raise ConfigError(f"query --by {args.by} needs --blocks")
        if index.gmm is None:
            raise ConfigError("this index has no GMM; block queries are unavailable")
        records = dataio.load_windows(args.blocks)
        illustrations = [pipeline.syntax_from_record(r) for r in records]
        profile = build_scene_profile(illustrations, KIND_BLOCKS, index.gmm)
        block_scores = pipeline.score_blocks(index, profile)

    from .retrieval import fuse_rankings, rank_images

    if args.by == "fused":
        ranked = fuse_rankings(statement_scores, block_scores)
    else:
        ranked = rank_images(statement_scores if args.by == "statements" else block_scores)
    results = [{"image_id": image_id, "score": score, "rank": rank}
               for rank, (image_id, score) in enumerate(ranked, start=1)][:limit]
    body = json.dumps({"results": results}, indent=1)
    if args.out:
        out = run.path(args.out)
        out.write_text(body + "\n", encoding="utf-8")
    else:
        print(body)
    return 0


def cmd_eval(args, config, run: _Run) -> int:
    cfg = _resolve_pipeline_config(args, config)
    mode = _resolve(args, config, "mode")
    records = dataio.load_windows(args.windows)
    components = cfg.components if mode in ("blocks", "fused") else None
    experiment = pipeline.prepare_experiment(
        records, bins=cfg.bins, components=components, seed=cfg.seed, alpha=cfg.alpha,
        holdout_per_class=cfg.holdout_per_class,
        statements_per_class=cfg.statements_per_class,
        illustrations_per_class=cfg.illustrations_per_class, mask=cfg.mask)
    report = pipeline.evaluate_experiment(experiment, mode=mode,
                                          binary_dap=cfg.binary_dap)
    out = run.path(args.out)
    rows = [[scene, f"{ap:.6f}"] for scene, ap in sorted(report.per_scene_ap.items())]
    rows.append(["MAP", f"{report.map_score:.6f}"])
    _write_csv(out, ["scene_id", "AP"], rows)
    _write_manifest(run, out.parent, "eval", {**asdict(cfg), "mode": mode},
                    inputs=[Path(args.windows)])
    print(f"{mode} MAP = {report.map_score:.4f} over {len(report.per_scene_ap)} scenes")
    return 0


def cmd_kl(args, config, run: _Run) -> int:
    analysis_bins = int(_resolve(args, config, "analysis_bins"))
    records = dataio.load_windows(args.windows)
    by_scene: dict[str, list[SyntaxMatrix]] = {}
    for record in records:
        if record.scene_label is None:
            continue
        by_scene.setdefault(record.scene_label, []).append(
            pipeline.syntax_from_record(record))
    if len(by_scene) < 2:
        raise ConfigError("kl needs at least two labeled scene classes")
    out_dir = Path(args.out_dir)
    summary_rows = []
    for prop in ("horizontal", "vertical", "size", "ratio", "color"):
        labeled = [
            (scene, analysis.property_distribution(by_scene[scene], prop, analysis_bins))
            for scene in sorted(by_scene)
        ]
        matrix = analysis.kl_matrix(labeled)
        rows = [[matrix.labels[i]] + [f"{v:.6f}" for v in matrix.values[i]]
                for i in range(len(matrix.labels))]
        _write_csv(run.path(out_dir / f"kl_{prop}.csv"),
                   ["scene"] + list(matrix.labels), rows)
        hi = matrix.max_pair()
        lo = matrix.min_pair()
        summary_rows.append([prop, f"{matrix.mean_divergence():.6f}",
                             f"{hi[0]}->{hi[1]}", f"{hi[2]:.6f}",
                             f"{lo[0]}->{lo[1]}", f"{lo[2]:.6f}"])
    _write_csv(run.path(out_dir / "summary.csv"),
               ["property", "mean_kl", "max_pair", "max_kl", "min_pair", "min_kl"],
               summary_rows)
    _write_manifest(run, out_dir, "kl", {"analysis_bins": analysis_bins},
                    inputs=[Path(args.windows)])
    print(f"wrote KL reports for {len(by_scene)} scenes to {out_dir}")
    return 0


def _parse_int_grid(text: str) -> list[int]:
    if ".." in text:
        low, high = text.split("..", 1)
        return list(range(int(low), int(high) + 1))
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_sweep(args, config, run: _Run) -> int:
    cfg = _resolve_pipeline_config(args, config)
    mode = _resolve(args, config, "mode")
    records = dataio.load_windows(args.windows)
    grids = [g for g in (args.bins_grid, args.gmm_grid, args.noise_grid,
                         "props" if args.props else None) if g]
    if len(grids) != 1:
        raise ConfigError("sweep needs exactly one of --bins, --gmm, --noise, --props")

    shared = dict(seed=cfg.seed, alpha=cfg.alpha,
                  holdout_per_class=cfg.holdout_per_class,
                  statements_per_class=cfg.statements_per_class,
                  illustrations_per_class=cfg.illustrations_per_class)
    if args.bins_grid:
        rows = pipeline.sweep_bins(records, _parse_int_grid(args.bins_grid), **shared)
        header, fields = ["B", "map"], ("B", "map")
        sweep_config = {"grid": args.bins_grid}
    elif args.gmm_grid:
        rows = pipeline.sweep_gmm(records, _parse_int_grid(args.gmm_grid), **shared)
        header, fields = ["K", "map"], ("K", "map")
        sweep_config = {"grid": args.gmm_grid}
    elif args.noise_grid:
        sigmas = [float(v) for v in args.noise_grid.split(",") if v.strip()]
        components = cfg.components if mode in ("blocks", "fused") else None
        rows = pipeline.sweep_noise(records, sigmas, mode=mode, bins=cfg.bins,
                                    components=components, **shared)
        header, fields = ["sigma", "map"], ("sigma", "map")
        sweep_config = {"grid": args.noise_grid, "mode": mode}
    else:
        masks = analysis.property_ablation_masks()
        components = cfg.components if mode in ("blocks", "fused") else None
        rows = pipeline.sweep_properties(records, masks, mode=mode, bins=cfg.bins,
                                         components=components, **shared)
        header, fields = ["properties", "map"], ("properties", "map")
        sweep_config = {"grid": "property-ablation", "mode": mode}

    out = run.path(args.out)
    _write_csv(out, header, [[row[f] for f in fields] for row in rows])
    _write_manifest(run, out.parent, "sweep", {**asdict(cfg), **sweep_config},
                    inputs=[Path(args.windows)])
    print(f"wrote {len(rows)} sweep rows to {out}")
    return 0


def cmd_serve(args, config, run: _Run) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.index_dir, thumbs_dir=args.thumbs_dir)
    port = int(_resolve(args, config, "port", 8000))
    host = args.host or "127.0.0.1"
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


# --- argument wiring --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thingsearch",
        description="Example-free scene retrieval from thing-window statistics.")
    parser.add_argument("--config", help="JSON file with default option values")
    parser.add_argument("--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic two-archetype dataset")
    p.add_argument("--out", required=True, help="output windows JSONL path")
    p.add_argument("--per-class", dest="per_class", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--archetypes", help="comma-separated archetype names")
    p.set_defaults(func=cmd_synth)

    def common_fit_flags(p):
        p.add_argument("--windows", required=True, help="windows JSONL input")
        p.add_argument("--seed", type=int)
        p.add_argument("--properties", help="comma-separated property subset")
        p.add_argument("--holdout-split", action="store_true",
                       help="fit on a per-class holdout split instead of all records")
        p.add_argument("--holdout-per-class", dest="holdout_per_class", type=int)

    p = sub.add_parser("fit-bins", help="fit bin boundaries and statement priors")
    common_fit_flags(p)
    p.add_argument("--bins", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_fit_bins)

    p = sub.add_parser("fit-gmm", help="fit the diagonal GMM over holdout windows")
    common_fit_flags(p)
    p.add_argument("--components", type=int)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_fit_gmm)

    p = sub.add_parser("profile", help="build a scene profile from statements or blocks")
    p.add_argument("--by", choices=("statements", "blocks"), required=True)
    p.add_argument("--statements", help="text file, one statement per line")
    p.add_argument("--boundaries", help="boundaries.json (statements mode)")
    p.add_argument("--blocks", help="windows JSONL of block illustrations")
    p.add_argument("--gmm", help="gmm.json (blocks mode)")
    p.add_argument("--scene-id", dest="scene_id")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("query", help="rank an indexed corpus against a query")
    p.add_argument("--index-dir", dest="index_dir", required=True)
    p.add_argument("--by", choices=("statements", "blocks", "fused"), required=True)
    p.add_argument("--statements", help="text file, one statement per line")
    p.add_argument("--blocks", help="windows JSONL of block illustrations")
    p.add_argument("--limit", type=int)
    p.add_argument("--out", help="write JSON results here instead of stdout")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="retrieval evaluation with per-scene AP and MAP")
    p.add_argument("--windows", required=True)
    p.add_argument("--by", dest="mode", choices=("statements", "blocks", "fused"))
    p.add_argument("--bins", type=int)
    p.add_argument("--components", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--properties")
    p.add_argument("--holdout-per-class", dest="holdout_per_class", type=int)
    p.add_argument("--statements-per-class", dest="statements_per_class", type=int)
    p.add_argument("--illustrations-per-class", dest="illustrations_per_class", type=int)
    p.add_argument("--binary-dap", dest="binary_dap", action="store_const", const=True)
    p.add_argument("--out", required=True, help="report CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("kl", help="per-property KL divergence reports between scenes")
    p.add_argument("--windows", required=True)
    p.add_argument("--analysis-bins", dest="analysis_bins", type=int)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_kl)

    p = sub.add_parser("sweep", help="bin-count, GMM-size, noise, or property sweeps")
    p.add_argument("--windows", required=True)
    p.add_argument("--bins", dest="bins_grid", help="e.g. 3..11 or 3,5,7")
    p.add_argument("--gmm", dest="gmm_grid", help="e.g. 4,16,64")
    p.add_argument("--noise", dest="noise_grid", help="e.g. 2,4,6,8,10,15,20")
    p.add_argument("--props", action="store_true", help="per-property ablation")
    p.add_argument("--by", dest="mode", choices=("statements", "blocks", "fused"))
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--components", type=int)
    p.add_argument("--holdout-per-class", dest="holdout_per_class", type=int)
    p.add_argument("--out", required=True, help="sweep CSV path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("serve", help="start the HTTP query service")
    p.add_argument("--index-dir", dest="index_dir", required=True)
    p.add_argument("--thumbs-dir", dest="thumbs_dir")
    p.add_argument("--port", type=int)
    p.add_argument("--host")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = _Run()
    try:
        config = _load_config_file(args.config)
        return args.func(args, config, run)
    except ThingSearchError as err:
        run.discard_outputs()
        json.dump({"error": type(err).__name__, "message": str(err)}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    except OSError as err:
        run.discard_outputs()
        json.dump({"error": "OSError", "message": str(err)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
