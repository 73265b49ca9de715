"""Command-line interface for mctk."""

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from mctk import __version__
from mctk.config import PipelineConfig, load_config
from mctk.domain.exceptions import (
    MctkError,
    NumericError,
    SchemaError,
    UsageError,
)
from mctk.domain.models import (
    BRANCHES,
    AudioTrack,
    ConditionSet,
    MouthBox,
    ParamStream,
    Recipe,
)
from mctk.io.container import (
    TensorContainer,
    asset_from_container,
    asset_to_container,
    read_container,
    read_tensor,
    write_container,
)
from mctk.io.documents import (
    dump_json,
    head_params_to_dict,
    load_head_params,
    load_json,
    load_landmarks,
    load_param_stream,
    parse_recipe,
)
from mctk.io.files import atomic_write_bytes
from mctk.io.images import encode_pixmap, read_frame_dir, read_pixmap
from mctk.pipeline.conditioning import (
    audio_to_spatial,
    batch_conditions,
    build_audio_windows,
    init_audio_adapter,
    init_patch_adapter,
    make_condition_set,
    patch_embed,
    rasterize_keypoints,
)
from mctk.pipeline.fusion import recombine
from mctk.pipeline.headmodel import gen_desk_asset
from mctk.pipeline.liploss import (
    crop_resize,
    lip_loss_from_frames,
    stable_mouth_bbox,
)
from mctk.pipeline.router import (
    additive_fuse,
    build_router,
    gradcheck_router,
    router_forward,
    router_header,
    sample_condition_dropout,
)
from mctk.pipeline.schedule import (
    alpha_bar_at,
    init_timestep_embedding,
    linear_schedule,
)
from mctk.pipeline.shading import directional_light, frame_image, render_frames
from mctk.util import file_digest, format_result, get_logger, setup_logging

logger = get_logger("cli")

Result = dict[str, Any]

SH_ORDER = ["Y00", "Y1-1", "Y10", "Y11", "Y2-2", "Y2-1", "Y20", "Y21", "Y22"]
GATE_TOLERANCE = {np.dtype(np.float32): 1e-5, np.dtype(np.float64): 1e-9}


def _mask(text: str) -> tuple[bool, bool, bool, bool]:
    if len(text) != len(BRANCHES) or set(text) - {"0", "1"}:
        raise UsageError(
            f"--mask must be {len(BRANCHES)} characters of 0/1 in branch "
            f"order {'/'.join(BRANCHES)}, got {text!r}"
        )
    a, b, c, d = (ch == "1" for ch in text)
    return a, b, c, d


def _direction(text: str) -> tuple[float, float, float]:
    try:
        x, y, z = (float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(
            f"--relight expects three comma-separated numbers, got {text!r}"
        ) from None
    return x, y, z


def _float_features(path: str, flag: str) -> np.ndarray:
    tensor = read_tensor(path)
    if tensor.dtype.kind != "f":
        raise SchemaError("feature tensors must be floating point", field=flag)
    return tensor


def cmd_config(args: argparse.Namespace, config: PipelineConfig) -> Result:
    """Print the effective configuration."""
    return {"config": config.to_dict()}


def cmd_gen_asset(args: argparse.Namespace, config: PipelineConfig) -> Result:
    asset = gen_desk_asset(args.seed, args.subdiv)
    write_container(args.out, asset_to_container(asset))
    return {
        "out": args.out,
        "vertices": asset.num_vertices,
        "faces": int(asset.faces.shape[0]),
        "sha256": file_digest(Path(args.out)),
    }


def cmd_fuse(args: argparse.Namespace, config: PipelineConfig) -> Result:
    if args.recipe:
        recipe = parse_recipe(
            load_json(args.recipe), base=Path(args.recipe).parent
        )
        if args.frame_count is not None:
            recipe = replace(recipe, frame_count=args.frame_count)
    else:
        sources = {
            "speech": args.speech,
            "head": args.head,
            "identity": args.identity,
            "lighting": args.lighting,
        }
        missing = [f"--{k}" for k, v in sources.items() if not v]
        if missing:
            raise UsageError(
                f"missing {', '.join(missing)} (or give --recipe)"
            )
        recipe = Recipe(
            identity=args.identity,
            lighting=args.lighting,
            head=args.head,
            mouth=args.speech,
            frame_count=args.frame_count,
        )
    streams: dict[str, ParamStream] = {}
    for source in (recipe.identity, recipe.lighting, recipe.head, recipe.mouth):
        if source not in streams:
            streams[source] = load_param_stream(source)
    frames = recombine(streams, recipe)
    dump_json(args.out, head_params_to_dict(frames, streams[recipe.head].fps))
    return {
        "out": args.out,
        "frames": len(frames),
        "sources": {
            "identity": recipe.identity,
            "lighting": recipe.lighting,
            "head": recipe.head,
            "mouth": recipe.mouth,
        },
    }


def cmd_render(args: argparse.Namespace, config: PipelineConfig) -> Result:
    params = load_head_params(args.params)
    asset = asset_from_container(read_container(args.asset))
    if args.relight:
        light = directional_light(_direction(args.relight)).to_vector()
        params = [replace(p, light=light) for p in params]
    size = (args.size, args.size)
    frames = render_frames(asset, params, size, args.threads)
    if args.check:
        for i, frame in enumerate(frames):
            px = frame.pixels
            if px.min() < 0 or px.max() > 1:
                raise NumericError(f"frame {i}: pixels outside [0, 1]")
            if not np.array_equal(np.isfinite(frame.depth), frame.coverage):
                raise NumericError(f"frame {i}: depth/coverage disagree")

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = ".ppm" if args.mode == "rgb" else ".pgm"
    files = []
    for i, frame in enumerate(frames):
        name = f"frame_{i:04d}{suffix}"
        image = frame_image(frame, args.mode)
        atomic_write_bytes(out_dir / name, encode_pixmap(image))
        files.append(name)
    manifest = {
        "frames": len(frames),
        "size": [args.size, args.size],
        "mode": args.mode,
        "asset_sha256": file_digest(Path(args.asset)),
        "files": files,
        "sh_order": SH_ORDER,
        "light_layout": "channel-major",
    }
    dump_json(out_dir / "manifest.json", manifest)
    covered = [int(f.coverage.sum()) for f in frames]
    return {"out_dir": str(out_dir), "frames": len(frames), "covered": covered}


def _check_gates(gates: np.ndarray, mask: tuple[bool, ...]) -> None:
    tol = GATE_TOLERANCE.get(gates.dtype, 1e-5)
    alive = np.asarray(mask, dtype=bool)
    if np.any(gates[:, ~alive, :] != 0):
        raise NumericError("masked branches received non-zero gates")
    if alive.any():
        total = gates[:, alive, :].astype(np.float64).sum(axis=1)
        if np.max(np.abs(total - 1.0)) > tol:
            raise NumericError("gates do not sum to one over live branches")


def cmd_route(args: argparse.Namespace, config: PipelineConfig) -> Result:
    h = _float_features(args.h, "--h")
    if h.ndim != 4:
        raise SchemaError("backbone feature must be BT×C×h×w", field="--h")
    paths = {
        "reference": (args.ref, "--ref"),
        "shading": (args.shade, "--shade"),
        "motion": (args.motion, "--motion"),
        "audio": (args.audio, "--audio"),
    }
    given = tuple(paths[k][0] is not None for k in BRANCHES)
    mask = _mask(args.mask) if args.mask is not None else given
    for (path, flag), on in zip(paths.values(), mask):
        if on and path is None:
            raise UsageError(f"branch enabled by --mask but {flag} is missing")
    if args.dropout is not None:
        keep = sample_condition_dropout(args.seed, args.dropout)
        a, b, c, d = (m and k for m, k in zip(mask, keep))
        mask = (a, b, c, d)
    features = {}
    for name, (path, flag) in paths.items():
        if path is None:
            features[name] = np.zeros_like(h)
        else:
            features[name] = _float_features(path, flag).astype(h.dtype)
    conds = ConditionSet(features=features, mask=mask)
    if not 1 <= args.t <= config.timesteps:
        raise UsageError(f"--t must lie in [1, {config.timesteps}]")
    schedule = linear_schedule(
        config.timesteps, config.beta_start, config.beta_end
    )

    channels = int(h.shape[1])
    cfg = build_router(
        channels,
        args.seed,
        config.hidden_layers,
        config.hidden_factor,
        config.mask_logit,
        h.dtype,
    )
    mask_text = "".join("1" if m else "0" for m in mask)
    result: Result = {
        "out": args.out,
        "mask": mask_text,
        "alpha_bar": alpha_bar_at(schedule, args.t),
    }
    if args.additive:
        fused = additive_fuse(h, conds)
        result["fusion"] = "additive"
    else:
        emb = init_timestep_embedding(
            config.embed_dim, channels, args.seed + 1, h.dtype
        )
        fused, gates, _ = router_forward(h, conds, args.t, emb, cfg)
        if args.check:
            _check_gates(gates.gates, mask)
        result.update(
            fusion="router",
            fully_masked=gates.fully_masked,
            router=router_header(cfg),
        )
        if args.gates:
            write_container(
                args.gates,
                TensorContainer.of(
                    h.dtype,
                    gates=gates.gates,
                    mask=np.asarray(mask, dtype=h.dtype),
                ),
            )
            result["gates"] = args.gates
    if args.check and not np.all(np.isfinite(fused)):
        raise NumericError("fused feature contains non-finite values")
    write_container(args.out, TensorContainer.of(h.dtype, features=fused))
    return result


def cmd_audio_window(
    args: argparse.Namespace, config: PipelineConfig
) -> Result:
    features = read_tensor(getattr(args, "in"))
    windows = build_audio_windows(AudioTrack(features=features), args.m)
    write_container(
        args.out, TensorContainer.of(features.dtype, windows=windows.windows)
    )
    return {
        "out": args.out,
        "frames": int(windows.windows.shape[0]),
        "width": windows.width,
    }


def cmd_keypoints(args: argparse.Namespace, config: PipelineConfig) -> Result:
    track = load_landmarks(args.landmarks)
    size = (args.size, args.size)
    maps = np.stack(
        [rasterize_keypoints(kps, size, args.sigma) for kps in track.points]
    )
    write_container(args.out, TensorContainer.of(np.float32, maps=maps))
    return {"out": args.out, "frames": track.frames, "size": list(size)}


def _patch_latents(
    images: np.ndarray,
    channels: int,
    patch: int,
    grid: tuple[int, int],
    seed: int,
) -> np.ndarray:
    adapter = init_patch_adapter(images.shape[1], patch, channels, grid, seed)
    return np.stack([patch_embed(image, adapter) for image in images])


def _require_side(images: np.ndarray, size: int, flag: str) -> np.ndarray:
    if images.ndim != 4 or images.shape[2:] != (size, size):
        raise UsageError(
            f"{flag} must hold {size}×{size} frames, "
            f"got shape {tuple(images.shape)}"
        )
    return images


def cmd_condition(args: argparse.Namespace, config: PipelineConfig) -> Result:
    sizing = replace(
        config,
        channels=args.channels,
        image_size=args.size,
        patch_size=args.patch,
    )
    grid = sizing.latent_grid
    channels = sizing.channels
    latents: dict[str, np.ndarray] = {}
    if args.reference:
        image = read_pixmap(args.reference)
        if image.ndim == 2:
            image = np.repeat(image[:, :, None], 3, axis=2)
        ref = _require_side(image.transpose(2, 0, 1)[None], args.size, "--ref")
        latents["reference"] = _patch_latents(
            ref, channels, args.patch, grid, args.seed
        )[0]
    if args.shading:
        frames = _require_side(
            read_frame_dir(args.shading), args.size, "--shading"
        )
        latents["shading"] = _patch_latents(
            frames, channels, args.patch, grid, args.seed + 1
        )
    if args.keypoints:
        maps = read_container(args.keypoints).require("maps")
        maps = _require_side(maps.astype(np.float32), args.size, "--keypoints")
        latents["motion"] = _patch_latents(
            maps, channels, args.patch, grid, args.seed + 2
        )
    if args.audio:
        track = AudioTrack(features=read_tensor(args.audio))
        windows = build_audio_windows(track, args.m)
        _, width, tokens, audio_channels = windows.windows.shape
        adapter = init_audio_adapter(
            width, tokens, audio_channels, channels, grid, args.seed + 3
        )
        latents["audio"] = audio_to_spatial(windows, adapter)
    if not latents:
        raise UsageError(
            "give at least one of --ref, --shading, --keypoints, --audio"
        )
    batch = batch_conditions(
        make_condition_set(
            latents.get("reference"),
            latents.get("shading"),
            latents.get("motion"),
            latents.get("audio"),
        )
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, alive in zip(BRANCHES, batch.mask):
        if alive:
            path = out_dir / f"{name}.mctk"
            write_container(
                path,
                TensorContainer.of(np.float32, features=batch.features[name]),
            )
            files[name] = str(path)
    return {
        "out_dir": str(out_dir),
        "frames": int(batch.features["reference"].shape[0]),
        "channels": channels,
        "grid": list(grid),
        "mask": "".join("1" if m else "0" for m in batch.mask),
        "files": files,
    }


def _box_dict(box: MouthBox) -> dict[str, int]:
    return {"x0": box.x0, "y0": box.y0, "x1": box.x1, "y1": box.y1}


def cmd_lipcrop(args: argparse.Namespace, config: PipelineConfig) -> Result:
    clip = read_frame_dir(args.frames)
    track = load_landmarks(args.landmarks)
    if track.frames != clip.shape[0]:
        raise UsageError(
            f"{args.landmarks} has {track.frames} frames, "
            f"{args.frames} has {clip.shape[0]}"
        )
    box = stable_mouth_bbox(track, args.pad, (clip.shape[2], clip.shape[3]))
    crops = crop_resize(clip, box, args.size)
    write_container(args.out, TensorContainer.of(np.float32, crops=crops))
    return {
        "out": args.out,
        "frames": int(crops.shape[0]),
        "box": _box_dict(box),
    }


def cmd_liploss(args: argparse.Namespace, config: PipelineConfig) -> Result:
    pred = read_frame_dir(args.pred)
    gt = read_frame_dir(args.gt)
    if pred.shape != gt.shape:
        raise UsageError(
            f"--pred clip {pred.shape} and --gt clip {gt.shape} differ"
        )
    track = load_landmarks(args.landmarks) if args.landmarks else None
    loss = lip_loss_from_frames(
        pred,
        gt,
        track,
        pad=args.pad,
        t_prime=args.tprime,
        seed=args.seed,
        size=args.size,
    )
    return {"loss": loss, "tprime": args.tprime, "seed": args.seed}


def cmd_gradcheck(args: argparse.Namespace, config: PipelineConfig) -> Result:
    report = gradcheck_router(
        args.seed,
        args.eps,
        channels=args.channels,
        spatial=(args.spatial, args.spatial),
        batch=args.batch,
    )
    return {
        "seed": report.seed,
        "eps": report.step,
        "mask": "".join("1" if m else "0" for m in report.mask),
        "coordinates": report.coordinates,
        "errors": report.errors,
        "max_rel_error": report.max_error,
        "passed": report.max_error < args.tol,
    }


Handler = Callable[[argparse.Namespace, PipelineConfig], Result]


def build_parser(config: PipelineConfig) -> argparse.ArgumentParser:
    """Build the argument parser; flag defaults come from ``config``."""
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="mctk",
        description="Multi-condition conditioning kit for talking-head video",
        formatter_class=fmt,
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    parser.add_argument(
        "--debug", action="store_true", help="Enable debug logging"
    )
    parser.add_argument(
        "--config", type=Path, default=None, help="Configuration TOML file"
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def command(
        name: str, handler: Handler, text: str
    ) -> argparse.ArgumentParser:
        p = sub.add_parser(
            name, help=text, description=text, formatter_class=fmt
        )
        p.set_defaults(handler=handler)
        return p

    command("config", cmd_config, "Print the effective configuration")

    p = command(
        "gen-asset", cmd_gen_asset, "Generate the synthetic head asset"
    )
    p.add_argument("--seed", type=int, default=config.seed, help="Basis seed")
    p.add_argument(
        "--subdiv", type=int, default=3, help="Icosphere subdivisions"
    )
    p.add_argument("--out", required=True, help="Output MCTK container")

    p = command("fuse", cmd_fuse, "Fuse and recombine parameter streams")
    p.add_argument("--speech", help="Stream supplying mouth motion")
    p.add_argument("--head", help="Stream supplying head rotation")
    p.add_argument("--identity", help="Stream supplying shape and camera")
    p.add_argument("--lighting", help="Stream supplying SH lighting")
    p.add_argument("--recipe", help="Recipe JSON instead of the four flags")
    p.add_argument(
        "--frame-count", type=int, default=None, help="Output frames"
    )
    p.add_argument("--out", required=True, help="Output HeadParams JSON")

    p = command("render", cmd_render, "Render SH shading maps")
    p.add_argument("--params", required=True, help="HeadParams JSON")
    p.add_argument("--asset", required=True, help="Asset MCTK container")
    p.add_argument(
        "--size", type=int, default=config.image_size, help="Image side"
    )
    p.add_argument(
        "--mode", choices=("rgb", "luma"), default="rgb", help="Output mode"
    )
    p.add_argument("--out-dir", required=True, help="Frame output directory")
    p.add_argument("--relight", default=None, help="Directional light x,y,z")
    p.add_argument(
        "--threads", type=int, default=config.threads, help="Frame workers"
    )
    p.add_argument(
        "--check", action="store_true", help="Verify output invariants"
    )

    p = command("route", cmd_route, "Gate and fuse condition features")
    p.add_argument("--h", required=True, help="Backbone feature container")
    p.add_argument("--ref", help="Reference feature container")
    p.add_argument("--shade", help="Shading feature container")
    p.add_argument("--motion", help="Motion feature container")
    p.add_argument("--audio", help="Audio feature container")
    p.add_argument(
        "--mask",
        default=None,
        help="Branch mask such as 1011 (default: the inputs given)",
    )
    p.add_argument("--t", type=int, required=True, help="Diffusion timestep")
    p.add_argument("--seed", type=int, default=config.seed, help="Router seed")
    p.add_argument(
        "--dropout",
        type=float,
        default=None,
        help="Condition dropout probability",
    )
    p.add_argument(
        "--additive", action="store_true", help="Ungated additive fusion"
    )
    p.add_argument("--out", required=True, help="Fused feature container")
    p.add_argument("--gates", default=None, help="Gate container output")
    p.add_argument(
        "--check", action="store_true", help="Verify gate invariants"
    )

    p = command(
        "audio-window", cmd_audio_window, "Stack sliding audio windows"
    )
    p.add_argument("--in", required=True, help="Audio track container")
    p.add_argument(
        "--m", type=int, default=config.audio_half_width, help="Half-width"
    )
    p.add_argument("--out", required=True, help="Window container")

    p = command("keypoints", cmd_keypoints, "Rasterize keypoint maps")
    p.add_argument("--landmarks", required=True, help="Landmark track JSON")
    p.add_argument(
        "--size", type=int, default=config.image_size, help="Map side"
    )
    p.add_argument(
        "--sigma",
        type=float,
        default=config.keypoint_sigma,
        help="Splat sigma in pixels",
    )
    p.add_argument("--out", required=True, help="Map container")

    p = command(
        "condition", cmd_condition, "Lift inputs into condition latents"
    )
    p.add_argument("--ref", dest="reference", help="Reference image")
    p.add_argument("--shading", help="Shading frame directory")
    p.add_argument("--keypoints", help="Keypoint map container")
    p.add_argument("--audio", help="Audio track container")
    p.add_argument(
        "--size", type=int, default=config.image_size, help="Input side"
    )
    p.add_argument(
        "--patch", type=int, default=config.patch_size, help="Patch side"
    )
    p.add_argument(
        "--channels", type=int, default=config.channels, help="Latent C"
    )
    p.add_argument(
        "--m", type=int, default=config.audio_half_width, help="Half-width"
    )
    p.add_argument("--seed", type=int, default=config.seed, help="Adapter seed")
    p.add_argument("--out-dir", required=True, help="Latent output directory")

    p = command("lipcrop", cmd_lipcrop, "Crop the stable mouth region")
    p.add_argument("--frames", required=True, help="Frame directory")
    p.add_argument("--landmarks", required=True, help="Landmark track JSON")
    p.add_argument(
        "--pad", type=float, default=config.mouth_pad, help="Box padding"
    )
    p.add_argument(
        "--size", type=int, default=config.lip_size, help="Crop side"
    )
    p.add_argument("--out", required=True, help="Crop container")

    p = command("liploss", cmd_liploss, "Lip-consistency loss between clips")
    p.add_argument("--pred", required=True, help="Predicted frame directory")
    p.add_argument("--gt", required=True, help="Ground-truth frame directory")
    p.add_argument(
        "--landmarks",
        default=None,
        help="Ground-truth landmark JSON (default: full-frame box)",
    )
    p.add_argument(
        "--pad", type=float, default=config.mouth_pad, help="Box padding"
    )
    p.add_argument(
        "--tprime",
        type=int,
        default=config.supervision_frames,
        help="Supervised frames",
    )
    p.add_argument(
        "--seed", type=int, default=config.seed, help="Frame sampling seed"
    )
    p.add_argument(
        "--size", type=int, default=config.lip_size, help="Crop side"
    )

    p = command(
        "gradcheck", cmd_gradcheck, "Finite-difference check of the router"
    )
    p.add_argument("--seed", type=int, default=config.seed, help="Case seed")
    p.add_argument(
        "--eps", type=float, default=1e-6, help="Central-difference step"
    )
    p.add_argument("--channels", type=int, default=4, help="Channels C")
    p.add_argument("--spatial", type=int, default=3, help="Spatial side")
    p.add_argument("--batch", type=int, default=2, help="Batch BT")
    p.add_argument("--tol", type=float, default=1e-5, help="Pass threshold")

    return parser


def _preparse(argv: Optional[list[str]]) -> argparse.Namespace:
    early = argparse.ArgumentParser(add_help=False)
    early.add_argument("--config", type=Path, default=None)
    early.add_argument("--debug", action="store_true")
    return early.parse_known_args(argv)[0]


def main(argv: Optional[list[str]] = None) -> int:
    """Main entry point for CLI.

    Args:
        argv: Optional argument list (for testing)

    Returns:
        Exit code
    """
    early = _preparse(argv)
    setup_logging(debug=early.debug)
    try:
        config = load_config(early.config)
        args = build_parser(config).parse_args(argv)
    except MctkError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    try:
        result = args.handler(args, config)
    except MctkError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        return 130
    except Exception as e:
        logger.exception("Unexpected error")
        print(f"Unexpected error: {e}", file=sys.stderr)
        return 1

    print(format_result(command=args.command, **result))
    if result.get("passed") is False:
        return NumericError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
