"""
MatGen CLI
Sampling di materiali tileabili ad alta risoluzione e strumenti di valutazione:
sample, tilecheck, render, clay, fit-displacement, metrics, mask.
"""
import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Tuple, Union, get_args, get_origin, get_type_hints

import numpy as np

import config
from decode import DECODE_MODES, linear_mock_decoder, patched_decode
from enhanced_logging import RunLogger, setup_enhanced_logging
from error_handlers import MatGenError, ShapeError, ValidationError, exit_code_for, format_exception, log_errors, require
from inpaint import border_mask, random_area_mask
from material_io import load_maps, read_image, save_image, save_maps, write_png16
from multiscale import ScaleChain, multiscale_sample
from oracles import AttractorDenoiser, GaussianScoreDenoiser, InpaintAttractorDenoiser, SmoothingDenoiser
from rng import SeedStreams, Stream
from sampler import DenoiserOracle, SamplerConfig, make_linear_schedule
from svbrdf import LightSpec, clay_render, evaluate_maps, fit_displacement_factor, render
from tiling import PATCH_MODES, seam_report

logger = logging.getLogger(__name__)

# ============================================================================
# COSTANTI
# ============================================================================

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_TILECHECK = 3

REPORT_SCHEMA_VERSION = 1
ORACLES = ("attractor", "smoothing", "gaussian")
STRIDE_ERROR = "resolution must be divisible by patch stride"

# ============================================================================
# RUN CONFIG
# ============================================================================

@dataclass
class RunConfig:
    """Parametri completi di una run di sampling; serializzabile e rieseguibile."""

    command: str = "sample"
    out: str = "out"
    seed: int = config.DEFAULT_SEED
    steps: int = config.DEFAULT_STEPS
    eta: float = config.DEFAULT_ETA
    oracle: str = "smoothing"
    target: Optional[str] = None
    res: int = 512
    base_res: Optional[int] = None
    channels: int = config.LATENT_CHANNELS
    patch: int = config.DEFAULT_PATCH
    max_roll: Optional[int] = None
    patch_mode: str = "rolling"
    restart_strength: float = config.RESTART_STRENGTH
    upsample_mode: str = "wrap"
    decode_patch: int = config.DECODE_PATCH
    overlap_frac: float = config.DECODE_OVERLAP
    decode_mode: str = "mean_match"
    decoder_upsample: str = "bilinear"
    inpaint_border: Optional[float] = None
    max_parallel_patches: int = config.MAX_PARALLEL_PATCHES
    smoothing_radius: int = 2
    smoothing_strength: float = 1.0
    mu: float = 0.0
    sigma_data: float = 1.0
    fit_displacement: bool = True

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError(f"cannot read run config {path}: {e}") from e
        require(isinstance(data, dict), "run config must be a JSON object", "run_config", path)
        hints = get_type_hints(cls)
        unknown = sorted(set(data) - set(hints))
        require(not unknown, f"unknown run config fields: {unknown}", "run_config", path)
        return cls(**{name: _coerce_field(name, value, hints[name]) for name, value in data.items()})


def _coerce_field(name: str, value, hint):
    """Valore JSON → tipo del campo; niente conversioni da stringa."""
    args = get_args(hint)
    if get_origin(hint) is Union and type(None) in args:
        if value is None:
            return None
        hint = next(a for a in args if a is not type(None))
    ok = {
        bool: isinstance(value, bool),
        int: isinstance(value, int) and not isinstance(value, bool),
        float: isinstance(value, (int, float)) and not isinstance(value, bool),
        str: isinstance(value, str),
    }[hint]
    if not ok:
        raise ValidationError(f"run config field {name!r} must be {hint.__name__}, got {value!r}")
    return float(value) if hint is float else value


@dataclass
class SamplePlan:
    cfg: RunConfig
    chain: ScaleChain
    target_shape: Tuple[int, int, int]
    base_shape: Tuple[int, int, int]
    target: Optional[np.ndarray]


def plan_sample(cfg: RunConfig) -> SamplePlan:
    """Valida tutta la configurazione e carica gli input, senza scrivere nulla."""
    require(cfg.oracle in ORACLES, f"oracle must be one of {ORACLES}", "oracle", cfg.oracle)
    require(cfg.patch_mode in PATCH_MODES, f"patch mode must be one of {PATCH_MODES}", "patch_mode", cfg.patch_mode)
    require(cfg.decode_mode in DECODE_MODES, f"decode mode must be one of {DECODE_MODES}",
            "decode_mode", cfg.decode_mode)
    require(cfg.channels >= 1, "channels must be positive", "channels", cfg.channels)
    require(cfg.patch >= 1, "patch must be positive", "patch", cfg.patch)

    fac = config.LATENT_FACTOR
    base_res = cfg.base_res or cfg.res
    for name, r in (("res", cfg.res), ("base_res", base_res)):
        require(r > 0 and r % fac == 0, STRIDE_ERROR, name, r)
    base_lat = base_res // fac
    require(base_lat % min(cfg.patch, base_lat) == 0, STRIDE_ERROR, "base_res", base_res)
    lat = cfg.res // fac
    chain = ScaleChain.build((base_lat, base_lat), (lat, lat), cfg.restart_strength)

    # validati qui, usati piu' avanti
    SamplerConfig(steps=cfg.steps, eta=cfg.eta, seed=cfg.seed,
                  max_parallel_patches=cfg.max_parallel_patches).timesteps(config.SCHEDULE_T)
    if cfg.inpaint_border is not None:
        border_mask(lat, lat, cfg.inpaint_border)

    target = None
    if cfg.oracle == "attractor" or cfg.inpaint_border is not None:
        require(cfg.target is not None, "--target is required for the attractor oracle and border inpainting",
                "target", cfg.target)
        target = read_image(cfg.target)
        expected = (lat, lat, cfg.channels)
        if target.shape != expected:
            raise ShapeError(f"target latent must have shape {expected}, got {target.shape}")

    return SamplePlan(cfg, chain, (lat, lat, cfg.channels), (base_lat, base_lat, cfg.channels), target)


def build_denoiser(plan: SamplePlan, sched) -> DenoiserOracle:
    cfg = plan.cfg
    if cfg.oracle == "attractor":
        denoiser = AttractorDenoiser(plan.target, sched)
    elif cfg.oracle == "gaussian":
        denoiser = GaussianScoreDenoiser(sched, mu=cfg.mu, sigma_data=cfg.sigma_data)
    else:
        denoiser = SmoothingDenoiser(sched, radius=cfg.smoothing_radius, strength=cfg.smoothing_strength)
    if cfg.inpaint_border is not None:
        h, w = plan.target_shape[:2]
        prior = denoiser if cfg.oracle != "attractor" else SmoothingDenoiser(
            sched, radius=cfg.smoothing_radius, strength=cfg.smoothing_strength)
        denoiser = InpaintAttractorDenoiser(plan.target, border_mask(h, w, cfg.inpaint_border), prior, sched)
    return denoiser

# ============================================================================
# COMANDI
# ============================================================================

@log_errors("sample")
def cmd_sample(cfg: RunConfig, run_logger: Optional[RunLogger] = None, *, dry_run: bool = False,
               progress: bool = False) -> Optional[Path]:
    """Multiscala + patch con rolling → decode a patch → mappe + manifest."""
    plan = plan_sample(cfg)
    logger.info(f"📐 stage chain {plan.chain.describe()}")
    if dry_run:
        logger.info("🧪 dry run: configurazione valida, nessun file scritto")
        return None

    sched = make_linear_schedule()
    sampler_cfg = SamplerConfig(steps=cfg.steps, eta=cfg.eta, seed=cfg.seed,
                                max_parallel_patches=cfg.max_parallel_patches)
    denoiser = build_denoiser(plan, sched)

    z = multiscale_sample(denoiser, plan.target_shape, plan.base_shape, sampler_cfg, sched, cfg.patch,
                          cfg.max_roll, cfg.restart_strength, patch_mode=cfg.patch_mode,
                          upsample_mode=cfg.upsample_mode, progress=progress, run_logger=run_logger)
    decoder = linear_mock_decoder(cfg.seed, in_channels=cfg.channels, upsample=cfg.decoder_upsample)
    maps = patched_decode(decoder, z, cfg.decode_patch, cfg.overlap_frac, mode=cfg.decode_mode,
                          max_parallel=cfg.max_parallel_patches, run_logger=run_logger)
    factor = fit_displacement_factor(maps.height, maps.normal_xyz()).factor if cfg.fit_displacement else 0.0

    out = Path(cfg.out)
    manifest = save_maps(maps, out, displacement_factor=factor)
    np.save(out / "latent.npy", z)
    (out / "run_config.json").write_text(cfg.to_json())
    logger.info(f"✅ materiale salvato in {out}")

    if run_logger is not None:
        run_logger.save_stats()
    return manifest


@log_errors("tilecheck")
def cmd_tilecheck(path, patch: Optional[int] = None, threshold: float = config.TILECHECK_THRESHOLD,
                  axis: str = "both") -> Tuple[dict, int]:
    img = read_image(path)
    report = seam_report(img, patch=patch, threshold=threshold, axis=axis)
    report.update({"schema_version": REPORT_SCHEMA_VERSION, "path": str(path), "shape": list(img.shape)})
    status = "✅ tileabile" if report["passed"] else "❌ cucitura visibile"
    logger.info(f"{status}: seam {report['seam_energy']:.6g}, interno {report['interior_energy']:.6g}, "
                f"ratio {report['ratio']:.3f} (soglia {threshold})")
    return report, EXIT_OK if report["passed"] else EXIT_TILECHECK


@log_errors("render")
def cmd_render(manifest, light: LightSpec, out, view=(0.0, 0.0, 1.0),
               displacement_factor: Optional[float] = None) -> Path:
    maps, meta = load_maps(manifest)
    d = meta["displacement_factor"] if displacement_factor is None else displacement_factor
    save_image(out, render(maps, light, view, d))
    return Path(out)


@log_errors("clay")
def cmd_clay(manifest, out, light: LightSpec, displacement_factor: Optional[float] = None) -> Path:
    maps, meta = load_maps(manifest)
    d = meta["displacement_factor"] if displacement_factor is None else displacement_factor
    save_image(out, clay_render(maps.height, d, light))
    return Path(out)


@log_errors("fit-displacement")
def cmd_fit_displacement(manifest, update: bool = False) -> dict:
    maps, meta = load_maps(manifest)
    fit = fit_displacement_factor(maps.height, maps.normal_xyz())
    result = {"factor": fit.factor, "residual_rmse": fit.residual_rmse, "degenerate": fit.degenerate}
    if update:
        path = Path(meta.pop("_dir")) / "manifest.json"
        meta["displacement_factor"] = fit.factor
        path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return result


@log_errors("metrics")
def cmd_metrics(manifest_a, manifest_b, light: Optional[LightSpec] = None) -> dict:
    maps_a, meta_a = load_maps(manifest_a)
    maps_b, _ = load_maps(manifest_b)
    table = evaluate_maps(maps_a, maps_b, light, displacement_factor=meta_a["displacement_factor"])
    return {"schema_version": REPORT_SCHEMA_VERSION, "maps": table}


@log_errors("mask")
def cmd_mask(kind: str, h: int, w: int, frac: float = config.BORDER_FRAC, seed: int = config.DEFAULT_SEED,
             max_frac: float = config.MASK_MAX_FRAC, out=None) -> dict:
    if kind == "border":
        mask = border_mask(h, w, frac)
    elif kind == "random":
        mask = random_area_mask(h, w, SeedStreams(seed).generator(Stream.MASK), max_frac)
    else:
        raise ValidationError(f"unknown mask kind {kind!r}")
    if out is not None:
        if str(out).lower().endswith(".npy"):
            np.save(out, mask)
        else:
            write_png16(out, mask)
    count = int(mask.sum())
    logger.info(f"🎭 maschera {kind} {h}x{w}: {count} pixel mascherati")
    return {"schema_version": REPORT_SCHEMA_VERSION, "kind": kind, "shape": [h, w],
            "masked_pixels": count, "masked_fraction": count / float(h * w)}

# ============================================================================
# PARSER
# ============================================================================

class _Parser(argparse.ArgumentParser):
    """Gli errori di parsing diventano errori di validazione (exit 1)."""

    def error(self, message):
        raise ValidationError(message)


def _fraction(text: str) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number or fraction: {text!r}") from None


def _vector(text: str) -> Tuple[float, float, float]:
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated vector: {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected 3 components, got {text!r}")
    return parts


def _add_light_args(p: argparse.ArgumentParser):
    p.add_argument("--light-kind", choices=("directional", "point"), default="directional")
    p.add_argument("--light", type=_vector, default=(0.3, 0.3, 1.0),
                   help="direzione (directional) o posizione (point), es. 0.3,0.3,1")
    p.add_argument("--intensity", type=float, default=1.0)


def _light_from(args) -> LightSpec:
    return LightSpec(args.light_kind, args.light, args.intensity)


def _print_json(data: dict):
    print(json.dumps(data, indent=2, sort_keys=True))


def _run_sample(args) -> int:
    cfg = RunConfig.from_file(args.from_config) if args.from_config else RunConfig()
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)
                 if f.name != "command" and getattr(args, f.name, None) is not None}
    for name, value in overrides.items():
        setattr(cfg, name, value)
    run_logger = RunLogger(args.logs_dir)
    try:
        manifest = cmd_sample(cfg, run_logger, dry_run=args.dry_run, progress=args.progress)
    finally:
        run_logger.close()
    if manifest is not None:
        print(manifest)
    return EXIT_OK


def _run_tilecheck(args) -> int:
    report, code = cmd_tilecheck(args.image, args.patch, args.threshold, args.axis)
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _print_json(report)
    return code


def _run_render(args) -> int:
    print(cmd_render(args.manifest, _light_from(args), args.out, displacement_factor=args.displacement))
    return EXIT_OK


def _run_clay(args) -> int:
    print(cmd_clay(args.manifest, args.out, _light_from(args), displacement_factor=args.displacement))
    return EXIT_OK


def _run_fit(args) -> int:
    _print_json(cmd_fit_displacement(args.manifest, update=args.update))
    return EXIT_OK


def _run_metrics(args) -> int:
    table = cmd_metrics(args.a, args.b, _light_from(args))
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
    _print_json(table)
    return EXIT_OK


def _run_mask(args) -> int:
    _print_json(cmd_mask(args.kind, args.height, args.width, args.frac, args.seed, args.max_frac, args.out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="matgen", description="Tileable high-resolution material sampling toolkit")
    parser.add_argument("--log-level", default=config.LOG_LEVEL)
    parser.add_argument("--logs-dir", default=config.LOGS_DIR)
    sub = parser.add_subparsers(dest="command", required=True)

    # sample: None = valore da RunConfig / --from-config
    p = sub.add_parser("sample", help="multiscale rolled-patched sampling + patched decoding")
    p.add_argument("--from-config", help="run_config.json di una run precedente")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--oracle", choices=ORACLES)
    p.add_argument("--target", help="latente target .npy (h x w x c)")
    p.add_argument("--res", type=int, help="risoluzione finale in pixel")
    p.add_argument("--base-res", type=int, help="risoluzione del primo stage in pixel")
    p.add_argument("--channels", type=int)
    p.add_argument("--patch", type=int, help="patch di diffusione in celle latenti")
    p.add_argument("--max-roll", type=int)
    p.add_argument("--patch-mode", choices=PATCH_MODES)
    p.add_argument("--restart-strength", type=float)
    p.add_argument("--upsample-mode", choices=("wrap", "aligned"))
    p.add_argument("--decode-patch", type=int, help="patch di decodifica in celle latenti")
    p.add_argument("--overlap-frac", type=float)
    p.add_argument("--decode-mode", choices=DECODE_MODES)
    p.add_argument("--decoder-upsample", choices=("box", "bilinear"))
    p.add_argument("--inpaint-border", type=_fraction, help="frazione di bordo da rigenerare, es. 1/16")
    p.add_argument("--max-parallel-patches", type=int)
    p.add_argument("--smoothing-radius", type=int)
    p.add_argument("--smoothing-strength", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--sigma-data", type=float)
    p.add_argument("--no-fit-displacement", dest="fit_displacement", action="store_const", const=False)
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(handler=_run_sample)

    p = sub.add_parser("tilecheck", help="seam energy report across the wrap boundary")
    p.add_argument("image")
    p.add_argument("--patch", type=int)
    p.add_argument("--threshold", type=float, default=config.TILECHECK_THRESHOLD)
    p.add_argument("--axis", choices=("both", "horizontal", "vertical"), default="both")
    p.add_argument("--json-out")
    p.set_defaults(handler=_run_tilecheck)

    p = sub.add_parser("render", help="render a material under an analytic light")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--displacement", type=float)
    _add_light_args(p)
    p.set_defaults(handler=_run_render)

    p = sub.add_parser("clay", help="clay render from the height map")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--displacement", type=float)
    _add_light_args(p)
    p.set_defaults(handler=_run_clay)

    p = sub.add_parser("fit-displacement", help="fit the height displacement factor to the normal map")
    p.add_argument("manifest")
    p.add_argument("--update", action="store_true", help="scrive il fattore nel manifest")
    p.set_defaults(handler=_run_fit)

    p = sub.add_parser("metrics", help="per-map rmse / cosine / ssim table")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--json-out")
    _add_light_args(p)
    p.set_defaults(handler=_run_metrics)

    p = sub.add_parser("mask", help="border or random-area mask")
    p.add_argument("kind", choices=("border", "random"))
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--frac", type=_fraction, default=config.BORDER_FRAC)
    p.add_argument("--max-frac", type=float, default=config.MASK_MAX_FRAC)
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    p.add_argument("--out")
    p.set_defaults(handler=_run_mask)
    return parser

# ============================================================================
# MAIN
# ============================================================================

def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ValidationError as e:
        print(f"matgen: error: {e}", file=sys.stderr)
        return EXIT_VALIDATION

    setup_enhanced_logging(args.log_level, args.logs_dir)
    try:
        return args.handler(args)
    except (MatGenError, OSError) as e:
        # gia' loggato da log_errors nei comandi
        logger.debug(f"{args.command}: {format_exception(e, include_traceback=True)}")
        print(f"matgen: error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == '__main__':
    sys.exit(main())

# End main.py
