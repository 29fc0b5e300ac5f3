#
# This source file is part of the thermsr open source project.
#
# Copyright 2025-present the thermsr authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#


import argparse
import hashlib
import json
import logging
import pathlib
import sys
import typing

from thermsr import color
from thermsr import dataio
from thermsr import degrade
from thermsr import enums
from thermsr import errors
from thermsr import metrics
from thermsr import options
from thermsr.imaging import load_image, save_image

from . import checkpoint
from . import config as config_mod
from . import inference
from . import training


logger = logging.getLogger('thermsr')

C = color.get_color()

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_IO = 4
EXIT_DIVERGED = 5


def print_msg(msg):
    print(msg, file=sys.stderr)


def print_error(msg):
    print_msg(f"{C.BOLD}{C.FAIL}error: {C.ENDC}{C.BOLD}{msg}{C.ENDC}")


class ColoredArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        c = C
        self.exit(
            EXIT_USAGE,
            f"{c.BOLD}{c.FAIL}error:{c.ENDC} "
            f"{c.BOLD}{message:s}{c.ENDC}\n",
        )


def _params_hash(params: typing.Mapping[str, typing.Any]) -> str:
    canonical = json.dumps(params, sort_keys=True, separators=(',', ':'),
                           default=str)
    return hashlib.sha1(canonical.encode('utf-8')).hexdigest()


def _log_run(command: str, config_hash: str, seed: typing.Optional[int]):
    logger.info('%s: config %s seed %s', command, config_hash, seed)


def _split_arg(value: str) -> typing.Optional[enums.Split]:
    return None if value == 'all' else enums.Split(value)


def _write_output(text: str, output: typing.Optional[str]):
    if output is None or output == '-':
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    path = pathlib.Path(output)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding='utf-8')
    except OSError as e:
        raise errors.ImageIOError(f'cannot write {path}') from e


def _resolve_config(args) -> config_mod.ExperimentConfig:
    overrides = dict(config_mod.parse_override(s) for s in args.set)
    if args.seed is not None:
        overrides['seed'] = args.seed
    if args.run_dir is not None:
        overrides['run_dir'] = args.run_dir
    resolved = config_mod.load_config(args.config, overrides=overrides)
    for key, source in sorted(resolved.sources.items()):
        if source != config_mod.SOURCE_DEFAULT:
            logger.debug('config %s from %s', key, source)
    cfg = resolved.config
    ablate = getattr(args, 'ablate', None)
    if ablate:
        cfg = cfg.with_ablations(ablate)
    return cfg


def cmd_synth(args) -> int:
    params = {
        'count': args.count, 'seed': args.seed, 'hr_size': args.hr_size,
        'scale': args.scale, 'jitter': args.jitter,
        'scene_labels': args.scene_labels, 'train_frac': args.train_frac,
        'noise_sigma': args.noise_sigma, 'bit_depth': args.bit_depth,
    }
    _log_run('synth', _params_hash(params), args.seed)
    manifest = degrade.write_corpus(
        args.out,
        args.count,
        args.seed,
        hr_size=args.hr_size,
        scale=args.scale,
        noise_sigma=args.noise_sigma,
        jitter=args.jitter,
        scene_labels=args.scene_labels,
        train_frac=args.train_frac,
        bit_depth=args.bit_depth,
    )
    counts = ', '.join(f'{k.value} {v}' for k, v in
                       sorted(manifest.degradation_counts().items(),
                              key=lambda kv: kv[0].value))
    logger.info('wrote %d pairs to %s (%s)', len(manifest), args.out, counts)
    return EXIT_OK


def cmd_train_vqvae(args) -> int:
    cfg = _resolve_config(args)
    _log_run('train-vqvae', cfg.config_hash(), cfg.seed)
    ckpt = training.train_vqvae(cfg)
    logger.info('saved %s', ckpt.path)
    return EXIT_OK


def cmd_train_ar(args) -> int:
    cfg = _resolve_config(args)
    _log_run('train-ar', cfg.config_hash(), cfg.seed)
    vqvae = args.vqvae
    if vqvae is None:
        vqvae = pathlib.Path(cfg.run_dir) / training.VQVAE_CKPT
    ckpt = training.train_ar(cfg, vqvae)
    logger.info('saved %s', ckpt.path)
    return EXIT_OK


def _sampler(args) -> typing.Optional[options.SamplerOptions]:
    if args.sampler is None:
        return None
    if enums.SamplerKind(args.sampler) is enums.SamplerKind.ARGMAX:
        return options.SamplerOptions.defaults()
    return options.SamplerOptions.topk(args.top_k, args.temperature)


def cmd_infer(args) -> int:
    ckpt = checkpoint.load_checkpoint(args.checkpoint, kind='ar')
    _log_run('infer', ckpt.config_hash, args.seed)
    sampler = _sampler(args)
    if args.manifest is not None:
        if args.pred_dir is None:
            raise errors.ConfigurationError(
                '--manifest requires --pred-dir')
        manifest = dataio.load_manifest(args.manifest)
        inference.infer_corpus(
            ckpt, manifest, args.pred_dir,
            split=_split_arg(args.split), sampler=sampler, seed=args.seed,
            guidance_dir=args.dump_guidance)
        return EXIT_OK

    if args.input is None or args.output is None:
        raise errors.ConfigurationError(
            'either --input and --output or --manifest and --pred-dir '
            'are required')
    model, cfg = inference.load_model(ckpt)
    lr = load_image(args.input)
    sr = inference.infer(model, lr, sampler=sampler, seed=args.seed)
    save_image(sr, args.output)
    if args.dump_guidance is not None:
        inference.dump_guidance(
            lr, cfg, args.dump_guidance, pathlib.Path(args.input).stem)
    logger.info('wrote %s', args.output)
    return EXIT_OK


def cmd_eval(args) -> int:
    metadata = {'pred_dir': str(args.pred_dir),
                'manifest': str(args.manifest), 'split': args.split}
    if args.checkpoint is not None:
        ckpt = checkpoint.load_checkpoint(args.checkpoint)
        metadata['config_hash'] = ckpt.config_hash
    else:
        metadata['config_hash'] = _params_hash(metadata)
    _log_run('eval', metadata['config_hash'], None)
    manifest = dataio.load_manifest(args.manifest)
    report = metrics.eval_corpus(
        args.pred_dir, manifest,
        split=_split_arg(args.split),
        baseline=args.baseline is not None,
        patch=args.patch,
        metadata=metadata,
    )
    if report.missing:
        logger.warning('%d predictions missing', len(report.missing))
    text = report.dumps() if args.report == 'json' else report.to_csv()
    _write_output(text, args.output)
    return EXIT_OK


def cmd_profile(args) -> int:
    _log_run('profile', _params_hash(
        {'hr': args.hr, 'lr': args.lr, 'sr': args.sr, 'row': args.row}),
        None)
    text = metrics.scanline_profile(
        load_image(args.hr), load_image(args.lr), load_image(args.sr),
        args.row)
    _write_output(text, args.output)
    return EXIT_OK


def _add_config_args(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH",
                   help="TOML experiment configuration.")
    p.add_argument("--seed", type=int)
    p.add_argument("--run-dir", metavar="DIR")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override a configuration parameter (repeatable).",
    )


def build_parser() -> ColoredArgumentParser:
    parser = ColoredArgumentParser(
        prog="thermsr",
        description="Infrared image super-resolution experiments.",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="Log debug messages.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", help="Write a synthetic LR/HR corpus.")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", metavar="DIR", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hr-size", type=int, default=64)
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--jitter", action="store_true",
                   help="Shift the HR window by less than one LR pixel.")
    p.add_argument("--scene-labels", action="store_true",
                   help="Draw scene labels from the category frequencies.")
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--noise-sigma", type=float, default=0.01)
    p.add_argument("--bit-depth", type=int, choices=[8, 16], default=8)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-vqvae", help="Pretrain the VQ-VAE.")
    _add_config_args(p)
    p.set_defaults(func=cmd_train_vqvae)

    p = sub.add_parser("train-ar", help="Train the next-scale model.")
    _add_config_args(p)
    p.add_argument("--vqvae", metavar="PATH",
                   help="VQ-VAE checkpoint (default: RUN_DIR/vqvae.bin).")
    p.add_argument(
        "--ablate",
        action="append",
        choices=[a.value for a in enums.Ablation],
        help="Disable a component (repeatable).",
    )
    p.set_defaults(func=cmd_train_ar)

    p = sub.add_parser("infer", help="Super-resolve LR images.")
    p.add_argument("--checkpoint", metavar="PATH", required=True)
    p.add_argument("--input", metavar="PATH")
    p.add_argument("--output", metavar="PATH")
    p.add_argument("--manifest", metavar="PATH")
    p.add_argument("--pred-dir", metavar="DIR")
    p.add_argument("--split", choices=["train", "test", "all"],
                   default="test")
    p.add_argument("--sampler", choices=[k.value for k in enums.SamplerKind])
    p.add_argument("--top-k", type=int, default=1)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump-guidance", metavar="DIR",
                   help="Also write heat and edge maps as PNG.")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="Score predictions against HR.")
    p.add_argument("--pred-dir", metavar="DIR", required=True)
    p.add_argument("--manifest", metavar="PATH", required=True)
    p.add_argument("--report", choices=["json", "csv"], default="json")
    p.add_argument("--baseline", choices=["bicubic"])
    p.add_argument("--split", choices=["train", "test", "all"],
                   default="test")
    p.add_argument("--patch", type=int, default=8)
    p.add_argument("--checkpoint", metavar="PATH",
                   help="Record this checkpoint's config hash.")
    p.add_argument("--output", metavar="PATH")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("profile", help="Export a scanline profile.")
    p.add_argument("--hr", metavar="PATH", required=True)
    p.add_argument("--lr", metavar="PATH", required=True)
    p.add_argument("--sr", metavar="PATH", required=True)
    p.add_argument("--row", type=int, required=True)
    p.add_argument("--output", metavar="PATH")
    p.set_defaults(func=cmd_profile)

    return parser


def _setup_logging(verbose: bool):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter('%(levelname)s %(message)s'))
    logger.handlers[:] = [handler]
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    logger.propagate = False


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.func(args)
    except errors.DivergenceError as e:
        print_error(e)
        return EXIT_DIVERGED
    except (errors.ImageIOError, errors.CheckpointError) as e:
        print_error(e)
        return EXIT_IO
    except (errors.ValidationError, errors.ConfigurationError) as e:
        print_error(e)
        return EXIT_INVALID
    except errors.ThermSRError as e:
        print_error(e)
        return EXIT_FAILURE