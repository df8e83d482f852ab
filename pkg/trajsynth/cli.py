# -*- encoding: utf-8 -*-
#
# This file is part of trajsynth.
#
# trajsynth is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
"""Command line interface.

Every command resolves its parameters with the precedence flag > config
file > default, writes its outputs under ``--out`` and leaves a `run.json`
manifest next to them; ``--config run.json`` replays the run.

Exit codes: 0 success, 2 usage, 3 parse or validation, 4 runtime.
"""

import argparse
import csv
import dataclasses
import glob
import json
import logging
import os
import sys

import numpy as np

from . import geodata, metrics, mobility, netsim, raster
from .config import RunConfig, default_threads, from_dict, load_config, \
    resolve
from .errors import ParseError, TrajSynthError, UsageError, \
    ValidationError
from .logger import get_logger
from .version import __version__

logger = get_logger(__name__)

MODELS = ('rwp', 'gm', 'mrwp', 'mgm', 'diffusion', 'truth')

MAP_DEFAULTS = {
    'side': 640.0,
    'cell_size': 10.0,
    'origin_x': 0.0,
    'origin_y': 0.0,
    'grid_pitch': 160.0,
    'diagonals': 4,
}

MOBILITY_DEFAULTS = {
    'speed_min': 0.5,
    'speed_max': 2.0,
    'gm_alpha': 0.75,
    'gm_mean_speed': 1.0,
    'gm_sigma': 0.3,
    'gm_heading_sigma': 0.4,
    'step_seconds': 1.0,
    'horizon_steps': 64,
}

DIFFUSION_DEFAULTS = {
    'T': 100,
    'beta_start': 1e-4,
    'beta_end': 0.02,
    'depth': 2,
    'width': 8,
    'lr': 1e-4,
    'batch_size': 8,
}

GLOBAL_DEFAULTS = {'seed': 0, 'threads': None}


def _defaults(*parts, **extra):
    values = dict(GLOBAL_DEFAULTS)
    for part in parts:
        values.update(part)
    values.update(extra)
    return values


COMMAND_DEFAULTS = {
    'gen-map': _defaults(MAP_DEFAULTS),
    'gen-traj': _defaults(MOBILITY_DEFAULTS, model='truth', map=None,
                          count=100, ckpt=None, threshold=0.5),
    'train': _defaults(MAP_DEFAULTS, DIFFUSION_DEFAULTS, data=None,
                       size=None, steps=1000, n_maps=4, traj_per_map=64),
    'evaluate': _defaults(gen=None, ref=None, map=None,
                          tau=metrics.DEFAULT_TAU,
                          n_proj=metrics.DEFAULT_N_PROJ),
    'netsim': _defaults(MOBILITY_DEFAULTS, traj_source='truth', traj=None,
                        map=None, ckpt=None, policy='maxsinr',
                        policy_cmd=None, episode_config=None, users=None,
                        horizon=None, episodes=1, threshold=0.5),
    'render': _defaults(input=None, map=None, pgm=False),
    # Pipeline baselines step 10 s so 64 points span a street route.
    'pipeline': _defaults(MAP_DEFAULTS, MOBILITY_DEFAULTS, map=None,
                          count=200, ckpt=None, ref=None, gen=None,
                          tau=metrics.DEFAULT_TAU,
                          n_proj=metrics.DEFAULT_N_PROJ, threshold=0.5,
                          step_seconds=10.0),
}

REPORT_COLUMNS = ['method', 'edr_mean', 'dtw_mean', 'cosine',
                  'sliced_wasserstein', 'n_generated', 'n_reference']


class ArgumentParser(argparse.ArgumentParser):
    """Parser raising :class:`UsageError` instead of exiting."""

    def error(self, message):
        raise UsageError(message)


def _global_flags(parser):
    parser.add_argument('--seed', type=int, default=None,
                        help='Global seed (default 0)')
    parser.add_argument('--threads', type=int, default=None,
                        help='Worker count (default TRAJSYNTH_THREADS or '
                             'logical cores)')
    parser.add_argument('--out', default=None,
                        help='Output directory or file')
    parser.add_argument('--config', default=None,
                        help='JSON config or run.json to replay')
    parser.add_argument('--verbose', action='store_true',
                        help='Log at DEBUG level')


def _map_flags(parser):
    parser.add_argument('--side', type=float, default=None)
    parser.add_argument('--cell-size', dest='cell_size', type=float,
                        default=None)
    parser.add_argument('--origin-x', dest='origin_x', type=float,
                        default=None)
    parser.add_argument('--origin-y', dest='origin_y', type=float,
                        default=None)
    parser.add_argument('--grid-pitch', dest='grid_pitch', type=float,
                        default=None)
    parser.add_argument('--diagonals', type=int, default=None)


def _mobility_flags(parser):
    for name in ('speed_min', 'speed_max', 'gm_alpha', 'gm_mean_speed',
                 'gm_sigma', 'gm_heading_sigma', 'step_seconds'):
        parser.add_argument('--' + name.replace('_', '-'), dest=name,
                            type=float, default=None)
    parser.add_argument('--horizon-steps', dest='horizon_steps', type=int,
                        default=None)
    parser.add_argument('--threshold', type=float, default=None,
                        help='Binarization level of generated rasters')


def build_parser():
    parser = ArgumentParser(
        prog='trajsynth',
        description='Map-conditioned trajectory generation, mobility '
                    'baselines and network simulation')
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + __version__)
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('gen-map', help='Synthesize a street map')
    _global_flags(p)
    _map_flags(p)

    p = sub.add_parser('gen-traj', help='Generate trajectories on a map')
    _global_flags(p)
    _mobility_flags(p)
    p.add_argument('--model', choices=MODELS, default=None)
    p.add_argument('--map', default=None)
    p.add_argument('--count', type=int, default=None)
    p.add_argument('--ckpt', default=None)

    p = sub.add_parser('train', help='Train the diffusion denoiser')
    _global_flags(p)
    _map_flags(p)
    p.add_argument('--data', default=None,
                   help='Directory of <stem>.json maps with <stem>.csv '
                        'trajectories (default: synthesize)')
    p.add_argument('--size', dest='size', type=int, default=None,
                   help='Raster side in cells')
    p.add_argument('--steps', type=int, default=None)
    p.add_argument('--T', dest='T', type=int, default=None)
    p.add_argument('--beta-start', dest='beta_start', type=float,
                   default=None)
    p.add_argument('--beta-end', dest='beta_end', type=float, default=None)
    p.add_argument('--depth', type=int, default=None)
    p.add_argument('--width', type=int, default=None)
    p.add_argument('--lr', type=float, default=None)
    p.add_argument('--batch-size', dest='batch_size', type=int,
                   default=None)
    p.add_argument('--n-maps', dest='n_maps', type=int, default=None)
    p.add_argument('--traj-per-map', dest='traj_per_map', type=int,
                   default=None)

    p = sub.add_parser('evaluate', help='Score generated trajectories')
    _global_flags(p)
    p.add_argument('--gen', default=None)
    p.add_argument('--ref', default=None)
    p.add_argument('--map', default=None)
    p.add_argument('--tau', type=float, default=None)
    p.add_argument('--n-proj', dest='n_proj', type=int, default=None)

    p = sub.add_parser('netsim', help='Run network episodes')
    _global_flags(p)
    _mobility_flags(p)
    p.add_argument('--traj-source', dest='traj_source',
                   choices=('file',) + MODELS, default=None)
    p.add_argument('--traj', default=None, help='CSV for --traj-source file')
    p.add_argument('--map', default=None)
    p.add_argument('--ckpt', default=None)
    p.add_argument('--policy', choices=('maxsinr', 'greedy', 'extern'),
                   default=None)
    p.add_argument('--policy-cmd', dest='policy_cmd', default=None,
                   help='Command of the external policy')
    p.add_argument('--episode-config', dest='episode_config', default=None)
    p.add_argument('--users', type=int, default=None)
    p.add_argument('--horizon', type=int, default=None)
    p.add_argument('--episodes', type=int, default=None)

    p = sub.add_parser('render', help='Render a map, heatmap or trajectories')
    _global_flags(p)
    p.add_argument('--input', default=None,
                   help='.npy heatmap, .json map or .csv trajectories')
    p.add_argument('--map', default=None)
    p.add_argument('--pgm', action='store_const', const=True, default=None,
                   help='Also write the raster as <stem>.ch<k>.pgm')

    p = sub.add_parser('pipeline', help='Generate, evaluate and report')
    _global_flags(p)
    _map_flags(p)
    _mobility_flags(p)
    p.add_argument('--map', default=None)
    p.add_argument('--count', type=int, default=None)
    p.add_argument('--ckpt', default=None)
    p.add_argument('--ref', default=None)
    p.add_argument('--gen', default=None)
    p.add_argument('--tau', type=float, default=None)
    p.add_argument('--n-proj', dest='n_proj', type=int, default=None)
    return parser


def resolve_run(args):
    """Build the :class:`RunConfig` of parsed arguments."""

    if not args.out:
        raise UsageError('--out is required')
    defaults = COMMAND_DEFAULTS[args.command]
    file_values = load_config(args.config) if args.config else {}
    flags = {k: getattr(args, k) for k in defaults if hasattr(args, k)}
    values = resolve(defaults, file_values, flags)
    seed = int(values.pop('seed'))
    threads = values.pop('threads') or default_threads()
    if int(threads) < 1:
        raise ValidationError('threads must be at least 1')
    return RunConfig(args.command, seed, int(threads), args.out, values)


def _output(out, default_name):
    """``(directory, file path)`` of an output given as directory or
    file."""

    if os.path.splitext(out)[1]:
        directory = os.path.dirname(out) or '.'
        path = out
    else:
        directory, path = out, os.path.join(out, default_name)
    os.makedirs(directory, exist_ok=True)
    return directory, path


def _extent(params):
    return geodata.Extent(float(params['origin_x']),
                          float(params['origin_y']), float(params['side']),
                          float(params['cell_size']))


def _require(params, *names):
    for name in names:
        if params.get(name) in (None, ''):
            raise UsageError('--%s is required' % name.replace('_', '-'))


def _positive(params, *names):
    for name in names:
        if params.get(name) is not None and int(params[name]) < 1:
            raise ValidationError('%s must be at least 1, got %s' % (
                name, params[name]))


def _mobility_config(params, model):
    values = dict(params, model=model)
    return from_dict(mobility.MobilityConfig, values)


def _trajectories(model, street_map, count, seed, params, threads):
    """``count`` trajectories of ``model`` on ``street_map``."""

    if model == 'truth':
        trajs = geodata.synth_trajectories(street_map, count, seed,
                                           params['step_seconds'])
        return [geodata.Trajectory(
            geodata.resample(t, int(params['horizon_steps'])).points,
            params['step_seconds'], t.traj_id) for t in trajs]
    bundle = None
    if model == mobility.DIFFUSION:
        _require(params, 'ckpt')
        bundle = _load_model(params['ckpt'], street_map)
    cfg = _mobility_config(params, model)
    return mobility.generate_batch(cfg, street_map, count, seed, threads,
                                   model=bundle,
                                   threshold=params['threshold'])


def _load_model(path, street_map):
    from .checkpoint import load_checkpoint

    params, schedule, header = load_checkpoint(path)
    size = header.get('extra', {}).get('size')
    if size is not None and int(size) != street_map.extent.n:
        raise ValidationError({
            'message': 'Map raster size differs from the training size',
            'data': 'map %d, checkpoint %s' % (street_map.extent.n, size)})
    return params, schedule


def cmd_gen_map(run):
    """Synthesize a map; write `map.json` and `map.png`."""

    p = run.params
    directory, path = _output(run.out, 'map.json')
    street_map = geodata.synth_map(run.seed, _extent(p), p['grid_pitch'],
                                   int(p['diagonals']))
    geodata.save_map(street_map, path)
    png = os.path.splitext(path)[0] + '.png'
    raster.render_png(raster.rasterize_map(street_map), png)
    run.write_manifest(directory)
    return [path, png]


def cmd_gen_traj(run):
    """Generate trajectories on a map; write a CSV."""

    p = run.params
    _require(p, 'map')
    _positive(p, 'count', 'horizon_steps')
    directory, path = _output(run.out, 'trajectories.csv')
    street_map = geodata.load_map(p['map'])
    trajs = _trajectories(p['model'], street_map, int(p['count']), run.seed,
                          p, run.threads)
    geodata.save_trajectories(trajs, path)
    run.write_manifest(directory)
    return [path]


def _load_dataset(directory):
    entries = []
    for map_path in sorted(glob.glob(os.path.join(directory, '*.json'))):
        traj_path = os.path.splitext(map_path)[0] + '.csv'
        if not os.path.exists(traj_path):
            continue
        street_map = geodata.load_map(map_path)
        entries.append((street_map, geodata.load_trajectories(
            traj_path, street_map.extent)))
    if not entries:
        raise ValidationError('No <stem>.json/<stem>.csv pairs in %s' %
                              directory)
    return geodata.Dataset(tuple(entries), geodata.TRAIN)


def _synth_dataset(run, directory):
    """Training maps side by side along x plus one held-out test map
    beyond the split boundary. A given ``size`` fixes the map side to
    ``size * cell_size``."""

    p = run.params
    side = float(p['side'])
    if p['size'] is not None:
        side = int(p['size']) * float(p['cell_size'])
    n_maps = int(p['n_maps'])
    entries = []
    for k in range(n_maps + 1):
        gap = side if k == n_maps else 0.0
        extent = geodata.Extent(p['origin_x'] + k * side + gap,
                                p['origin_y'], side, p['cell_size'])
        street_map = geodata.synth_map(geodata.child_seed(run.seed, k),
                                       extent, p['grid_pitch'],
                                       int(p['diagonals']))
        trajs = geodata.synth_trajectories(
            street_map, int(p['traj_per_map']),
            geodata.child_seed(run.seed, 1000 + k))
        entries.append((street_map, trajs))
    boundary = p['origin_x'] + n_maps * side + side / 2.0
    train, test = geodata.spatial_split(entries, boundary)
    test_map = test.entries[0][0]
    geodata.save_map(test_map, os.path.join(directory, 'test_map.json'))
    return train


def cmd_train(run):
    """Train the denoiser; write the checkpoint and `loss.csv`."""

    import torch
    from .checkpoint import save_checkpoint
    from .denoiser import DenoiserConfig, build_denoiser
    from .diffusion import OptimizerConfig, make_schedule, train, \
        write_loss_log

    p = run.params
    _positive(p, 'T', 'batch_size', 'n_maps', 'traj_per_map')
    if int(p['steps']) < 0:
        raise ValidationError('steps must be non-negative')
    directory, path = _output(run.out, 'model.ckpt')
    if p['data']:
        dataset = _load_dataset(p['data'])
    else:
        dataset = _synth_dataset(run, directory)
    size = dataset.entries[0][0].extent.n
    if p['size'] is not None and int(p['size']) != size:
        raise ValidationError('Data rasters are %d cells, not %s' % (
            size, p['size']))

    torch.set_num_threads(run.threads)
    schedule = make_schedule(int(p['T']), p['beta_start'], p['beta_end'])
    net = build_denoiser(DenoiserConfig(depth=int(p['depth']),
                                        width=int(p['width'])), run.seed)
    opt_cfg = OptimizerConfig(lr=p['lr'], batch_size=int(p['batch_size']))
    net, log = train(net, dataset, schedule, opt_cfg, int(p['steps']),
                     run.seed)

    save_checkpoint(path, net, schedule,
                    extra={'size': size, 'steps': int(p['steps']),
                           'seed': run.seed})
    loss_path = os.path.join(directory, 'loss.csv')
    write_loss_log(log, loss_path)
    run.write_manifest(directory)
    return [path, loss_path]


def cmd_evaluate(run):
    """Score ``--gen`` against ``--ref``; write `report.json` and both
    heatmaps."""

    p = run.params
    _require(p, 'gen', 'ref', 'map')
    directory, path = _output(run.out, 'report.json')
    extent = geodata.load_map(p['map']).extent
    gen = geodata.load_trajectories(p['gen'], extent)
    ref = geodata.load_trajectories(p['ref'], extent)
    report = metrics.evaluate_sets(gen, ref, extent, p['tau'],
                                   int(p['n_proj']), run.seed, run.threads)
    with open(path, 'w') as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write('\n')
    metrics.save_heatmap(metrics.heatmap_from(gen, extent),
                         os.path.join(directory, 'gen_heatmap.npy'))
    metrics.save_heatmap(metrics.heatmap_from(ref, extent),
                         os.path.join(directory, 'ref_heatmap.npy'))
    run.write_manifest(directory)
    return [path]


def _policy_factory(p):
    if p['policy'] == 'extern':
        _require(p, 'policy_cmd')
        command = p['policy_cmd'].split()
        return lambda: netsim.ExternalPolicy(command)
    return netsim.POLICIES[p['policy']]


def cmd_netsim(run):
    """Run episodes; write `kpi_<i>.csv` per episode and `summary.json`."""

    p = run.params
    _require(p, 'map')
    _positive(p, 'episodes', 'users', 'horizon')
    directory, path = _output(run.out, 'summary.json')
    street_map = geodata.load_map(p['map'])
    extent = street_map.extent

    if p['episode_config']:
        cfg = netsim.EpisodeConfig.from_file(p['episode_config'])
    else:
        cfg = netsim.EpisodeConfig(step_seconds=p['step_seconds'])
    overrides = {}
    if p['users']:
        overrides['n_users'] = int(p['users'])
    if p['horizon']:
        overrides['horizon_steps'] = int(p['horizon'])
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)

    episodes = int(p['episodes'])
    seeds = [geodata.child_seed(run.seed, i) for i in range(episodes)]
    if p['traj_source'] == 'file':
        _require(p, 'traj')
        trajs = geodata.load_trajectories(p['traj'], extent)
        sets = [trajs] * episodes
    else:
        params = dict(p, horizon_steps=cfg.horizon_steps,
                      step_seconds=cfg.step_seconds)
        sets = [_trajectories(p['traj_source'], street_map, cfg.n_users,
                              s, params, run.threads) for s in seeds]

    results = netsim.run_episodes(sets, _policy_factory(p), cfg, seeds,
                                  extent, run.threads)
    written = []
    for i, (records, _) in enumerate(results):
        kpi_path = os.path.join(directory, 'kpi_%d.csv' % i)
        netsim.write_kpi_csv(records, kpi_path)
        written.append(kpi_path)
    summary = {'policy': p['policy'], 'traj_source': p['traj_source'],
               'config': cfg.to_dict(),
               'episodes': [s for _, s in results]}
    with open(path, 'w') as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write('\n')
    run.write_manifest(directory)
    return written + [path]


def cmd_render(run):
    """Render ``--input`` as a grayscale PNG; with ``--pgm`` also export
    the rendered raster as `<stem>.ch<k>.pgm` files."""

    p = run.params
    _require(p, 'input')
    source = p['input']
    stem = os.path.splitext(os.path.basename(source))[0]
    directory, path = _output(run.out, stem + '.png')
    ext = os.path.splitext(source)[1].lower()
    overlay = None
    if ext == '.npy':
        try:
            data = np.load(source)
        except (OSError, ValueError) as e:
            raise ParseError({'message': 'Unable to read heatmap',
                              'data': '%s: %s' % (source, e)})
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ValidationError('Heatmap must be a square 2D array')
        extent = geodata.Extent(0.0, 0.0, float(data.shape[0]), 1.0)
        peak = data.max() if data.size else 0
        grid = raster.RasterGrid(extent, data / peak if peak > 0 else data)
        exported = grid
    elif ext == '.json':
        grid = exported = raster.rasterize_map(geodata.load_map(source))
    elif ext == '.csv':
        _require(p, 'map')
        street_map = geodata.load_map(p['map'])
        trajs = geodata.load_trajectories(source, street_map.extent)
        heat = metrics.heatmap_from(trajs, street_map.extent)
        grid = raster.rasterize_map(street_map)
        overlay = exported = raster.RasterGrid(
            street_map.extent, (heat.data > 0).astype(np.float64))
    else:
        raise ParseError('Cannot render %s' % source)

    raster.render_png(grid, path, overlay=overlay)
    paths = [path]
    if p['pgm']:
        paths.extend(raster.write_pgm(exported,
                                      os.path.join(directory, stem)))
    run.write_manifest(directory)
    return paths


def cmd_pipeline(run):
    """Generate every source on one map, score each against the
    reference set and write `report.json` and `report.csv`."""

    p = run.params
    _positive(p, 'count', 'horizon_steps')
    directory, path = _output(run.out, 'report.json')

    if p['map']:
        street_map = geodata.load_map(p['map'])
    else:
        street_map = geodata.synth_map(run.seed, _extent(p), p['grid_pitch'],
                                       int(p['diagonals']))
    geodata.save_map(street_map, os.path.join(directory, 'map.json'))
    extent = street_map.extent
    count = int(p['count'])

    if p['ref']:
        reference = geodata.load_trajectories(p['ref'], extent)
    else:
        reference = geodata.synth_trajectories(
            street_map, count, geodata.child_seed(run.seed, 0))
    geodata.save_trajectories(reference,
                              os.path.join(directory, 'reference.csv'))

    sources = {}
    for index, model in enumerate(mobility.MODELS):
        sources[model] = _trajectories(model, street_map, count,
                                       geodata.child_seed(run.seed, index + 1),
                                       p, run.threads)
    if p['ckpt']:
        sources['diffusion'] = _trajectories(
            'diffusion', street_map, count,
            geodata.child_seed(run.seed, 10), p, run.threads)
    if p['gen']:
        sources['file'] = geodata.load_trajectories(p['gen'], extent)
    sources['reference'] = geodata.synth_trajectories(
        street_map, count, geodata.child_seed(run.seed, 11))

    rows = {}
    for name, trajs in sources.items():
        report = metrics.evaluate_sets(trajs, reference, extent, p['tau'],
                                       int(p['n_proj']), run.seed,
                                       run.threads)
        rows[name] = report.to_dict()

    with open(path, 'w') as f:
        json.dump({'map': 'map.json', 'rows': rows}, f, indent=2,
                  sort_keys=True)
        f.write('\n')
    csv_path = os.path.join(directory, 'report.csv')
    with open(csv_path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(REPORT_COLUMNS)
        for name, row in rows.items():
            writer.writerow([name] + [row[c] for c in REPORT_COLUMNS[1:]])
    run.write_manifest(directory)
    return [path, csv_path]


COMMANDS = {
    'gen-map': cmd_gen_map,
    'gen-traj': cmd_gen_traj,
    'train': cmd_train,
    'evaluate': cmd_evaluate,
    'netsim': cmd_netsim,
    'render': cmd_render,
    'pipeline': cmd_pipeline,
}


def _setup_logging(verbose):
    root = logging.getLogger('trajsynth')
    if not any(isinstance(h, logging.StreamHandler) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(
            '%(asctime)s %(name)s %(levelname)s %(message)s'))
        root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def main(argv=None):
    """Entry point of the `trajsynth` executable.

    :rtype: int
    :return: Process exit code.
    """

    _setup_logging(False)
    try:
        args = build_parser().parse_args(argv)
        _setup_logging(args.verbose)
        run = resolve_run(args)
        logger.debug("Resolved run: %s", run.to_dict())
        for path in COMMANDS[run.command](run):
            logger.info("Wrote %s", path)
    except TrajSynthError as e:
        logger.error("%s", e)
        return e.exit_code
    except Exception:
        logger.exception("Unexpected failure")
        return TrajSynthError.exit_code
    return 0
