"""
LAAT command line

Subcommands:
    generate   synthetic labeled clouds (two-arms, four-cylinders, voronoi-web)
    denoise    ant colony run, writes a pheromone score vector
    mc         fixed-kernel Markov chain baseline, writes a stationary vector
    evaluate   sweep | calibrate | pr | convergence reports against labels
    replay     re-run the command recorded in a manifest and compare digests

Every command writes <output>.manifest.json next to its main output.
Exit codes: 0 success, 2 usage / configuration, 3 data, 4 convergence.

Usage:
    python -m laat generate two-arms --seed 7 -o arms.csv
    python -m laat denoise arms.csv --epochs 20 -o arms.pheromone.csv
    python -m laat evaluate sweep arms.pheromone.csv arms.csv -o sweep.csv
"""

import argparse
import logging
import sys
import time
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import psutil

from . import __version__
from .colony import run_laat, run_laat_multi_reward
from .config import get_threads
from .datagen import generate
from .exceptions import ConfigurationError, ConvergenceError, DataError, DataFormatError, LaatError
from .formats import (
    digests, file_digest, manifest_path, read_cloud, read_manifest, read_scores,
    read_snapshots, write_cloud, write_manifest, write_report, write_scores, write_snapshots,
)
from .geometry import build_index
from .logging_config import log_run_summary, setup_logging
from .markov import alignment_kernel, distance_kernel, stationary_by_component
from .metrics import (
    AhdReport, convergence_curve, evaluate_threshold, precision_recall_curve, threshold_sweep,
)
from .models import GenSpec, KernelSettings, LaatConfig, RunManifest
from .validators import build_model, parse_float_list, parse_int_list, parse_reward, read_config_file

logger = logging.getLogger(__name__)

_CONFIG_FLAGS = (
    'epochs', 'ants', 'steps', 'radius', 'phi', 'zeta', 'beta', 'kappa', 'seed',
    'placement', 'subcubes', 'mode', 'min_neighbors', 'backend', 'strict',
    'pheromone_weight', 'alignment_weight',
)


class _RunContext:
    """Collects what the manifest of one command needs"""

    def __init__(self, command: str, argv: Sequence[str]):
        self.command = command
        self.argv = list(argv)
        self.started = time.time()
        self.started_at = datetime.now().isoformat(timespec='seconds')
        self.process = psutil.Process()
        self.peak_mb = 0.0
        self.sample_memory()

    def sample_memory(self):
        self.peak_mb = max(self.peak_mb, self.process.memory_info().rss / (1024 * 1024))

    def finish(self, config: Dict[str, Any], seed: Optional[int], inputs: Sequence[str],
               outputs: Sequence[str], notes: Optional[Dict[str, Any]] = None) -> RunManifest:
        self.sample_memory()
        outputs = [str(p) for p in outputs]
        input_digests = digests(inputs)
        manifest = RunManifest(
            command=self.command,
            argv=self.argv,
            config=config,
            seed=seed,
            input_digests=input_digests,
            tool_version=__version__,
            started_at=self.started_at,
            duration_s=round(time.time() - self.started, 3),
            peak_memory_mb=round(self.peak_mb, 1),
            outputs=outputs,
            output_digests=digests(outputs),
            notes=notes or {},
        )
        path = write_manifest(manifest, manifest_path(outputs[0]))
        log_run_summary(
            self.command, seed, next(iter(input_digests.values()), None),
            manifest.duration_s, manifest.peak_memory_mb, outputs, extra=notes,
        )
        logger.info(f"Manifest written to {path}")
        return manifest


def _default_output(source: str, tag: str) -> str:
    path = Path(source)
    return str(path.with_name(f"{path.stem}.{tag}.csv"))


def _rerun_path(output: str) -> str:
    path = Path(output)
    return str(path.with_name(f"{path.stem}.rerun{path.suffix}"))


# ---------------- generate ---------------- #
def cmd_generate(args: argparse.Namespace, ctx: _RunContext) -> RunManifest:
    values = {'family': args.family, 'seed': args.seed}
    for name in ('noise_seed', 'n_points', 'n_centers', 'mix_ratio', 'edge', 'jitter'):
        if getattr(args, name) is not None:
            values[name] = getattr(args, name)
    spec = build_model(GenSpec, values)

    output = args.output or f"{spec.family}_seed{spec.seed}.csv"
    cloud = generate(spec)
    ctx.sample_memory()
    write_cloud(cloud, output)
    print(f"✅ {cloud.n} points written to {output}")
    return ctx.finish(spec.model_dump(), spec.seed, [], [output],
                      notes={'n_points': cloud.n, 'labels': {str(k): int(v) for k, v in
                                                            zip(*np.unique(cloud.labels, return_counts=True))}})


# ---------------- denoise ---------------- #
def merge_laat_config(args: argparse.Namespace) -> LaatConfig:
    """defaults < config file < flags"""
    values: Dict[str, Any] = {}
    if args.config:
        values.update(read_config_file(args.config))
    for name in _CONFIG_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            values[name] = value
    if args.reward:
        values['rewards'] = [parse_reward(text) for text in args.reward]
    if args.snapshots:
        values['record_history'] = True
    values['threads'] = get_threads(args.threads)
    return build_model(LaatConfig, values)


def _denoise(cloud, cfg: LaatConfig):
    threads = cfg.threads if cfg.mode == 'batched' else 1
    if cfg.rewards or cfg.pheromone_weight is not None or cfg.alignment_weight is not None:
        return run_laat_multi_reward(cloud, cfg, threads=threads)
    return run_laat(cloud, cfg, threads=threads)


def cmd_denoise(args: argparse.Namespace, ctx: _RunContext) -> RunManifest:
    cfg = merge_laat_config(args)
    cloud = read_cloud(args.input)
    output = args.output or _default_output(args.input, 'pheromone')
    if cfg.mode == 'sequential' and cfg.threads > 1:
        logger.info("Sequential mode walks one ant at a time; --threads only affects the index build")

    field = _denoise(cloud, cfg)
    ctx.sample_memory()
    outputs = [write_scores(field.values, output)]
    notes: Dict[str, Any] = {'ants_per_epoch': sorted(set(field.ants_per_epoch))}

    if args.snapshots:
        outputs += write_snapshots(field.history, args.snapshots)
        notes['snapshots'] = args.snapshots

    if args.rerun_excluding is not None:
        keep = field.values <= args.rerun_excluding
        excluded = int((~keep).sum())
        if keep.sum() == 0:
            raise DataError("rerun threshold removes every point", detail=f"threshold {args.rerun_excluding}")
        logger.info(f"Second pass: {excluded} points above {args.rerun_excluding:g} excluded")
        rerun = _denoise(cloud.subset(keep), cfg.model_copy(update={'record_history': False}))
        second = np.zeros(cloud.n)
        second[keep] = rerun.values
        outputs.append(write_scores(second, _rerun_path(output)))
        notes['rerun'] = {'threshold': args.rerun_excluding, 'excluded': excluded}

    print(f"✅ pheromone for {cloud.n} points written to {output}")
    return ctx.finish(cfg.model_dump(), cfg.seed, [args.input] + ([args.config] if args.config else []),
                      outputs, notes)


# ---------------- mc ---------------- #
def cmd_mc(args: argparse.Namespace, ctx: _RunContext) -> RunManifest:
    values = {'flavor': args.flavor}
    for name in ('beta', 'radius', 'tol', 'max_iter', 'min_neighbors', 'backend'):
        if getattr(args, name) is not None:
            values[name] = getattr(args, name)
    if args.no_refine:
        values['refine'] = False
    settings = build_model(KernelSettings, values)
    threads = get_threads(args.threads)

    cloud = read_cloud(args.input)
    output = args.output or _default_output(args.input, 'stationary')
    index = build_index(cloud, settings.radius, backend=settings.backend,
                        min_neighbors=settings.min_neighbors, workers=threads)
    builder = alignment_kernel if settings.flavor == 'alignment' else distance_kernel
    kernel = builder(index, settings.beta)
    result = stationary_by_component(kernel, tol=settings.tol, max_iter=settings.max_iter,
                                     workers=threads, refine=settings.refine)
    ctx.sample_memory()
    write_scores(result.pi, output)

    notes = {'components': result.n_components, 'residual': result.residual, 'iterations': result.iterations}
    if result.n_components > 1:
        notes['normalization'] = 'per component'
    print(f"✅ stationary vector ({result.n_components} component(s)) written to {output}")
    return ctx.finish(settings.model_dump(), None, [args.input], [output], notes)


# ---------------- evaluate ---------------- #
def _positives(cloud, labels_text: Optional[str]) -> np.ndarray:
    if labels_text:
        return np.isin(cloud.labels, parse_int_list(labels_text))
    return cloud.manifold_mask()


def cmd_evaluate(args: argparse.Namespace, ctx: _RunContext) -> RunManifest:
    cloud = read_cloud(args.cloud)
    if cloud.labels is None:
        raise DataError("evaluation needs a labeled cloud", detail=args.cloud)
    output = args.output or _default_output(args.scores, args.mode)
    inputs = [args.scores, args.cloud]
    notes: Dict[str, Any] = {'mode': args.mode}

    if args.mode == 'sweep':
        scores = read_scores(args.scores, cloud.n)
        thresholds = np.array(parse_float_list(args.thresholds)) if args.thresholds else None
        report = threshold_sweep(scores, cloud.ground_truth(), cloud, thresholds=thresholds)
        frame = report.to_frame()
        notes.update(best_threshold=report.best_threshold, best_ahd=report.best_ahd, best_count=report.best_count)

    elif args.mode == 'calibrate':
        if not args.calibration_scores or not args.calibration_cloud:
            raise ConfigurationError(["calibrate: --calibration-scores and --calibration-cloud are required"])
        twin = read_cloud(args.calibration_cloud)
        twin_scores = read_scores(args.calibration_scores, twin.n)
        calibration: AhdReport = threshold_sweep(twin_scores, twin.ground_truth(), twin)
        scores = read_scores(args.scores, cloud.n)
        ahd, count = evaluate_threshold(scores, calibration.best_threshold, cloud)
        oracle = threshold_sweep(scores, cloud.ground_truth(), cloud)
        frame = pd.DataFrame([{
            'threshold': calibration.best_threshold, 'survivors': count, 'ahd': ahd,
            'calibration_ahd': calibration.best_ahd, 'best_ahd': oracle.best_ahd,
        }])
        inputs += [args.calibration_scores, args.calibration_cloud]
        notes.update(threshold=calibration.best_threshold, ahd=ahd, survivors=count)

    elif args.mode == 'pr':
        scores = read_scores(args.scores, cloud.n)
        positives = _positives(cloud, args.positive_labels)
        counts = parse_int_list(args.counts) if args.counts else \
            sorted(set(np.linspace(cloud.n / 20, cloud.n, 20).round().astype(int).tolist()))
        frame = precision_recall_curve(scores, positives, counts).to_frame()
        notes.update(positives=int(positives.sum()))

    else:
        snapshots = read_snapshots(args.scores, cloud.n)
        twin_snapshots, twin = None, None
        if args.calibration_scores:
            if not args.calibration_cloud:
                raise ConfigurationError(["convergence: --calibration-scores needs --calibration-cloud"])
            twin = read_cloud(args.calibration_cloud)
            twin_snapshots = read_snapshots(args.calibration_scores, twin.n)
            inputs += [args.calibration_cloud]
        curve = convergence_curve(snapshots, cloud, twin_snapshots, twin)
        frame = pd.DataFrame(curve, columns=['epoch', 'ahd'])
        notes.update(epochs=len(curve), final_ahd=curve[-1][1])

    ctx.sample_memory()
    write_report(frame, output)
    print(f"✅ {args.mode} report written to {output}")
    return ctx.finish({'mode': args.mode}, None, inputs, [output], notes)


# ---------------- replay ---------------- #
def cmd_replay(args: argparse.Namespace, ctx: _RunContext) -> RunManifest:
    recorded = read_manifest(args.manifest)
    logger.info(f"Replaying: {recorded.command} {' '.join(recorded.argv)}")
    manifest = _dispatch(recorded.argv)

    mismatched = []
    for path, digest in recorded.output_digests.items():
        if not Path(path).is_file() or file_digest(path) != digest:
            mismatched.append(path)
    if mismatched:
        raise DataError("replay did not reproduce the recorded outputs", detail=", ".join(mismatched))
    print(f"✅ replay reproduced {len(recorded.output_digests)} output digest(s)")
    return manifest


# ---------------- parser ---------------- #
def _add_laat_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group('colony settings (override the config file)')
    g.add_argument('--epochs', type=int, help='Number of epochs (default 100)')
    g.add_argument('--ants', type=int, help='Ants per epoch (default 100)')
    g.add_argument('--steps', type=int, help='Jumps per ant (default 2500)')
    g.add_argument('--radius', type=float, help='Neighborhood radius (default 0.2)')
    g.add_argument('--phi', type=float, help='Pheromone deposited per visit (default 0.05)')
    g.add_argument('--zeta', type=float, help='Evaporation rate in (0, 1) (default 0.1)')
    g.add_argument('--beta', type=float, help='Inverse temperature (default 10)')
    g.add_argument('--kappa', type=float, help='Alignment weight in [0, 1] (default 0.5)')
    g.add_argument('--seed', type=int, help='Random seed (default 0)')
    g.add_argument('--placement', choices=['median', 'subcube'], help='Ant placement (default median)')
    g.add_argument('--subcubes', type=int, help='Cell count for subcube placement (default 200)')
    g.add_argument('--mode', choices=['sequential', 'batched'], help='Pheromone update schedule')
    g.add_argument('--min-neighbors', type=int, help='Degeneracy filter threshold (default D)')
    g.add_argument('--backend', choices=['kdtree', 'faiss', 'brute'], help='Radius query backend')
    g.add_argument('--strict', action='store_true', default=None, help='Fail on coincident points')
    g.add_argument('--pheromone-weight', type=float, help='Pheromone weight of the multi-reward preference')
    g.add_argument('--alignment-weight', type=float, help='Alignment weight of the multi-reward preference')
    g.add_argument('--reward', action='append', metavar='NAME:+W',
                   help="Attribute reward, e.g. density:+0.2 or temperature:-0.2 (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='laat',
        description="Manifold extraction from noisy point clouds with the locally aligned ant technique",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  laat generate two-arms --seed 7 -o arms.csv
  laat denoise arms.csv --epochs 20 -o arms.pheromone.csv
  laat mc arms.csv --flavor alignment -o arms.stationary.csv
  laat evaluate sweep arms.pheromone.csv arms.csv -o sweep.csv
        """
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    parser.add_argument('--log-dir', help='Directory for log files (env LAAT_LOG_DIR, default logs)')
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='Log level')
    parser.add_argument('--no-log-files', action='store_true', help='Log to the console only')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('generate', help='Write a synthetic labeled point cloud')
    p.add_argument('family', choices=['two-arms', 'four-cylinders', 'voronoi-web'])
    p.add_argument('--seed', type=int, default=0, help='Manifold seed')
    p.add_argument('--noise-seed', type=int, help='Background noise seed (calibration twins)')
    p.add_argument('--n-points', type=int, help='voronoi-web: total points (default 262144)')
    p.add_argument('--n-centers', type=int, help='voronoi-web: tessellation centers (default 32)')
    p.add_argument('--mix-ratio', type=float, help='voronoi-web: positives / negatives (default 0.367)')
    p.add_argument('--edge', type=float, help='voronoi-web: cube edge length (default 200)')
    p.add_argument('--jitter', type=float, help='voronoi-web: gaussian scatter (default 0)')
    p.add_argument('-o', '--output', help='Output file (.csv or binary)')

    p = sub.add_parser('denoise', help='Run the ant colony and write pheromone scores')
    p.add_argument('input', help='Point cloud file')
    p.add_argument('-c', '--config', help='KEY=VALUE settings file')
    p.add_argument('-o', '--output', help='Score file (.csv or binary)')
    p.add_argument('--snapshots', help='Directory for per-epoch pheromone snapshots')
    p.add_argument('--rerun-excluding', type=float, metavar='T',
                   help='Second pass without the points whose pheromone exceeds T')
    p.add_argument('--threads', type=int, help='Worker threads (env LAAT_THREADS)')
    _add_laat_flags(p)

    p = sub.add_parser('mc', help='Stationary vector of the fixed-kernel Markov chain')
    p.add_argument('input', help='Point cloud file')
    p.add_argument('--flavor', choices=['alignment', 'distance'], default='alignment')
    p.add_argument('--beta', type=float, help='Inverse temperature (default 10)')
    p.add_argument('--radius', type=float, help='Neighborhood radius (default 0.2)')
    p.add_argument('--tol', type=float, help='Power method tolerance (default 1e-10)')
    p.add_argument('--max-iter', type=int, help='Power method iteration cap (default 100000)')
    p.add_argument('--no-refine', action='store_true',
                   help='Power method only; no backward-iteration refinement when it stalls')
    p.add_argument('--min-neighbors', type=int, help='Degeneracy filter threshold (default D)')
    p.add_argument('--backend', choices=['kdtree', 'faiss', 'brute'])
    p.add_argument('--threads', type=int, help='Worker threads (env LAAT_THREADS)')
    p.add_argument('-o', '--output', help='Score file (.csv or binary)')

    p = sub.add_parser('evaluate', help='Score a ranking against ground-truth labels')
    p.add_argument('mode', choices=['sweep', 'calibrate', 'pr', 'convergence'])
    p.add_argument('scores', help='Score file (snapshot directory for convergence)')
    p.add_argument('cloud', help='Labeled point cloud the scores belong to')
    p.add_argument('--thresholds', help='sweep: comma-separated thresholds instead of every distinct score')
    p.add_argument('--calibration-scores', help='calibrate/convergence: scores (or snapshots) of the twin cloud')
    p.add_argument('--calibration-cloud', help='calibrate/convergence: labeled twin cloud')
    p.add_argument('--counts', help="pr: survivor counts, '100,200' or 'start:stop:step'")
    p.add_argument('--positive-labels', help='pr: labels counted as positive (default every non-noise label)')
    p.add_argument('-o', '--output', help='Report CSV')

    p = sub.add_parser('replay', help='Re-run the command recorded in a manifest')
    p.add_argument('manifest', help='<output>.manifest.json')

    return parser


_COMMANDS = {
    'generate': cmd_generate,
    'denoise': cmd_denoise,
    'mc': cmd_mc,
    'evaluate': cmd_evaluate,
    'replay': cmd_replay,
}


def _dispatch(argv: Sequence[str]) -> RunManifest:
    args = build_parser().parse_args(list(argv))
    return _COMMANDS[args.command](args, _RunContext(args.command, argv))


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(log_dir=args.log_dir, level=args.log_level, to_files=not args.no_log_files)
    try:
        _COMMANDS[args.command](args, _RunContext(args.command, _recordable(argv)))
        return 0
    except ConfigurationError as e:
        logger.error(f"Configuration error: {e}")
        for problem in e.problems:
            print(f"  - {problem}", file=sys.stderr)
        return e.exit_code
    except ConvergenceError as e:
        logger.error(f"Convergence error: {e}")
        return e.exit_code
    except DataError as e:
        logger.error(f"Data error: {e}")
        return e.exit_code
    except LaatError as e:
        logger.error(f"Error: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return DataFormatError(getattr(e, 'filename', '') or '', str(e)).exit_code


def _recordable(argv: Sequence[str]) -> List[str]:
    """argv without the logging flags, which do not affect outputs"""
    cleaned, skip = [], False
    for token in argv:
        if skip:
            skip = False
            continue
        if token in ('--log-dir', '--log-level'):
            skip = True
            continue
        if token == '--no-log-files' or token.startswith('--log-dir=') or token.startswith('--log-level='):
            continue
        cleaned.append(token)
    return cleaned


if __name__ == "__main__":
    sys.exit(main())
