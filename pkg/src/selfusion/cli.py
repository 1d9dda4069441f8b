"""Command line front end.

Subcommands::

    selfusion emit-views INPUT --out-dir DIR        # 24 view inputs + manifest.json
    selfusion fuse --manifest DIR/manifest.json     # collect predicted masks, fuse
    selfusion metrics --pred P --gt G               # or --dataset dataset.json
    selfusion sweep --dataset dataset.json --tau1 0:23 --tau2 0:23
    selfusion phantom --out-dir DIR --scans 4       # synthetic validation data

Exit codes: 0 success, 2 invalid arguments, 3 data or format error,
4 missing view masks.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import xform
from .ccl import CONNECTIVITIES
from .fusion import (DEFAULT_TAU1, DEFAULT_TAU2, FusionParams, confidence_map, connected_union,
                     self_fuse)
from .metrics import ScoreWeights, evaluate_dataset
from .phantom import PhantomError, PhantomSpec, VoterNoiseModel, generate_phantom, simulate_views
from .sweep import parse_range, sweep
from .volume import BinaryMask, ConfidenceMap, VolumeFormatError, read_volume, write_volume

log = logging.getLogger("selfusion")

VIEWS_SCHEMA = "selfusion.views/1"
DATASET_SCHEMA = "selfusion.dataset/1"
TRANSFORM_VERSION = "selfusion-xform/1"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MISSING = 0, 2, 3, 4
SUFFIX = {"nifti": ".nii.gz", "mvol": ".mvol"}


class DataError(Exception):
    """Input files are inconsistent with each other or with a manifest."""


class MissingViewsError(DataError):
    def __init__(self, keys):
        self.keys = list(keys)
        super().__init__("missing view masks: " + ", ".join(self.keys))


def _key_stem(key) -> str:
    return str(key).replace(":", "_")


def _convention(flip_convention: str) -> str:
    return f"{TRANSFORM_VERSION}:{flip_convention}"


def _load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n")


# ---------------------------------------------------------------------------
# emit-views / fuse

def emit_views(input_path, out_dir, fmt: str = "nifti", flip_convention: str = "none-flip") -> dict:
    """Write the 24 transformed inputs and a manifest; returns the manifest."""
    input_path = Path(input_path)
    out_dir = Path(out_dir)
    vol = read_volume(input_path)
    (out_dir / "views").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    entries = []
    for key in xform.enumerate_views():
        t = xform.view_transform(key, flip_convention)
        rel_in = f"views/{_key_stem(key)}{SUFFIX[fmt]}"
        rel_mask = f"masks/{_key_stem(key)}{SUFFIX[fmt]}"
        write_volume(xform.apply(t, vol), out_dir / rel_in, fmt)
        entries.append({"key": str(key), "input": rel_in, "mask": rel_mask,
                        "dims": list(t.out_dims(vol.dims))})
    manifest = {
        "schema": VIEWS_SCHEMA,
        "convention": _convention(flip_convention),
        "input": str(input_path.resolve()),
        "dims": list(vol.dims),
        "entries": entries,
    }
    _write_json(out_dir / "manifest.json", manifest)
    return manifest


def _parse_convention(manifest: dict) -> str:
    conv = manifest.get("convention", "")
    version, _, flip = conv.partition(":")
    if manifest.get("schema") != VIEWS_SCHEMA or version != TRANSFORM_VERSION:
        raise DataError(f"unsupported manifest schema/convention {manifest.get('schema')!r} / {conv!r}; "
                        f"expected {VIEWS_SCHEMA} / {TRANSFORM_VERSION}")
    if flip not in xform.FLIP_CONVENTIONS:
        raise DataError(f"unknown flip convention {flip!r} in manifest")
    return flip


def collect_views(manifest_path, binarize_threshold: float = 0.5) -> list[BinaryMask]:
    """Read every predicted view mask and map it back to native space."""
    manifest_path = Path(manifest_path)
    manifest = _load_json(manifest_path)
    flip = _parse_convention(manifest)
    base = manifest_path.parent
    entries = manifest.get("entries", [])
    keys = [e["key"] for e in entries]
    expected = [str(k) for k in xform.enumerate_views()]
    if sorted(keys) != sorted(expected):
        raise DataError("manifest entries do not enumerate the 24 views")
    missing = [e["key"] for e in entries if not (base / e["mask"]).is_file()]
    if missing:
        raise MissingViewsError(missing)
    native_dims = tuple(manifest["dims"])
    masks = []
    for e in entries:
        t = xform.view_transform(xform.ViewKey.parse(e["key"]), flip)
        m = read_volume(base / e["mask"], as_mask=True, binarize_threshold=binarize_threshold)
        if m.dims != t.out_dims(native_dims):
            raise DataError(f"mask for view {e['key']} has dims {m.dims}, "
                            f"expected {t.out_dims(native_dims)}")
        masks.append(xform.apply(xform.invert(t), m))
    return masks


def fuse_manifest(manifest_path, params: FusionParams, binarize_threshold: float = 0.5):
    return self_fuse(collect_views(manifest_path, binarize_threshold), params)


# ---------------------------------------------------------------------------
# dataset manifests

def load_dataset(path) -> tuple[Path, list[dict]]:
    path = Path(path)
    doc = _load_json(path)
    if doc.get("schema") != DATASET_SCHEMA:
        raise DataError(f"{path}: expected schema {DATASET_SCHEMA!r}, got {doc.get('schema')!r}")
    scans = doc.get("scans") or []
    if not scans:
        raise ValueError(f"{path}: dataset has no scans")
    return path.parent, scans


def _scan_confidence(base: Path, scan: dict, n_views: int, cache_dir: Path | None,
                     binarize_threshold: float) -> ConfidenceMap:
    if scan.get("confidence"):
        vol = read_volume(base / scan["confidence"])
        return ConfidenceMap(vol.array.astype(np.int32), vol.spacing, vol.nifti_header,
                             n_views=int(scan.get("n_views", n_views)))
    if not scan.get("views"):
        raise DataError(f"scan {scan.get('id')!r} has neither 'confidence' nor 'views'")
    cached = cache_dir / f"{scan['id']}_confidence.mvol" if cache_dir else None
    if cached is not None and cached.is_file():
        vol = read_volume(cached)
        return ConfidenceMap(vol.array, vol.spacing, n_views=n_views)
    masks = collect_views(base / scan["views"], binarize_threshold)
    conf = confidence_map(masks)
    if cached is not None:
        cached.parent.mkdir(parents=True, exist_ok=True)
        write_volume(conf, cached, "mvol")
    return conf


# ---------------------------------------------------------------------------
# argument handling

def _load_weights(arg: str | None) -> ScoreWeights:
    if not arg:
        return ScoreWeights()
    text = Path(arg).read_text() if Path(arg).is_file() else arg
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"--weights is neither a JSON file nor JSON text: {exc}") from exc
    return ScoreWeights.from_mapping(data)


def _add_fusion_args(p):
    p.add_argument("--tau1", type=int, default=DEFAULT_TAU1, help="seed threshold (votes > tau1)")
    p.add_argument("--tau2", type=int, default=DEFAULT_TAU2, help="growth threshold (votes > tau2)")
    p.add_argument("--connectivity", type=int, choices=CONNECTIVITIES, default=26)
    p.add_argument("--binarize-threshold", type=float, default=0.5,
                   help="soft predictions are foreground when > this value")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfusion", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("emit-views", help="write the 24 view inputs for an external predictor")
    p.add_argument("input")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=("nifti", "mvol"), default="nifti")
    p.add_argument("--flip-convention", choices=xform.FLIP_CONVENTIONS, default="none-flip")

    p = sub.add_parser("fuse", help="collect predicted view masks and fuse them")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest", help="view manifest written by emit-views")
    src.add_argument("--confidence", help="cached confidence map to fuse directly")
    p.add_argument("--n-views", type=int, default=24, help="votes behind --confidence")
    p.add_argument("--out-mask", required=True)
    p.add_argument("--out-confidence")
    _add_fusion_args(p)
    p.add_argument("--format", choices=("nifti", "mvol"), default=None,
                   help="output format (default: from file suffix)")

    p = sub.add_parser("metrics", help="segmentation metrics for one scan or a dataset")
    p.add_argument("--pred")
    p.add_argument("--gt")
    p.add_argument("--dataset", help="dataset manifest with 'pred' and 'gt' per scan")
    p.add_argument("--connectivity", type=int, choices=CONNECTIVITIES, default=26)
    p.add_argument("--min-overlap", type=float, default=0.0,
                   help="minimum overlap fraction for lesion detection (0: any shared voxel)")
    p.add_argument("--weights", help="score weights as a JSON file or JSON text")
    p.add_argument("--binarize-threshold", type=float, default=0.5)
    p.add_argument("--output-format", choices=("json", "csv"), default="json")
    p.add_argument("--out", help="write the report here instead of stdout")

    p = sub.add_parser("sweep", help="metrics over a (tau1, tau2) grid")
    p.add_argument("--dataset", required=True)
    p.add_argument("--tau1", default="0:23", help="'a:b' inclusive, 'a,b,c' or one value")
    p.add_argument("--tau2", default="0:23")
    p.add_argument("--n-views", type=int, default=24)
    p.add_argument("--connectivity", type=int, choices=CONNECTIVITIES, default=26)
    p.add_argument("--weights")
    p.add_argument("--binarize-threshold", type=float, default=0.5)
    p.add_argument("--cache-dir", help="store confidence maps computed from views here")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="CSV path (default stdout)")

    p = sub.add_parser("phantom", help="generate synthetic scans with simulated view masks")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--spec", help="JSON file with phantom fields and an optional 'noise' object")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scans", type=int, default=1)
    p.add_argument("--n-views", type=int, default=24)
    p.add_argument("--format", choices=("nifti", "mvol"), default="mvol")
    return parser


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_emit_views(args) -> int:
    manifest = emit_views(args.input, args.out_dir, args.format, args.flip_convention)
    print(f"wrote {len(manifest['entries'])} views to {args.out_dir}")
    return EXIT_OK


def _cmd_fuse(args) -> int:
    if args.manifest:
        params = FusionParams(args.tau1, args.tau2, 24, args.connectivity)
        fused, conf = fuse_manifest(args.manifest, params, args.binarize_threshold)
    else:
        vol = read_volume(args.confidence)
        conf = ConfidenceMap(vol.array.astype(np.int32), vol.spacing, vol.nifti_header,
                             n_views=args.n_views)
        params = FusionParams(args.tau1, args.tau2, args.n_views, args.connectivity)
        fused = connected_union(conf, params)
    write_volume(fused, args.out_mask, args.format)
    if args.out_confidence:
        write_volume(conf, args.out_confidence, args.format)
    log.info("fused mask: %d voxels", fused.count)
    return EXIT_OK


def _cmd_metrics(args) -> int:
    weights = _load_weights(args.weights)
    if args.dataset:
        if args.pred or args.gt:
            raise ValueError("use either --dataset or --pred/--gt")
        base, scans = load_dataset(args.dataset)
        pairs, ids = [], []
        for s in scans:
            if not s.get("pred"):
                raise DataError(f"scan {s.get('id')!r} has no 'pred' entry")
            pairs.append((read_volume(base / s["pred"], as_mask=True,
                                      binarize_threshold=args.binarize_threshold),
                          read_volume(base / s["gt"], as_mask=True)))
            ids.append(str(s.get("id", len(ids))))
    elif args.pred and args.gt:
        pairs = [(read_volume(args.pred, as_mask=True, binarize_threshold=args.binarize_threshold),
                  read_volume(args.gt, as_mask=True))]
        ids = [Path(args.pred).name]
    else:
        raise ValueError("metrics needs --pred and --gt, or --dataset")
    for (p, g), sid in zip(pairs, ids):
        if p.dims != g.dims:
            raise DataError(f"scan {sid}: prediction dims {p.dims} differ from reference {g.dims}")
    report = evaluate_dataset(pairs, args.connectivity, weights, args.min_overlap, ids)
    for w in report.warnings:
        log.warning(w)
    _emit(report.to_json() if args.output_format == "json" else report.to_csv(), args.out)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    weights = _load_weights(args.weights)
    tau1s, tau2s = parse_range(args.tau1), parse_range(args.tau2)
    base, scans = load_dataset(args.dataset)
    cache = Path(args.cache_dir) if args.cache_dir else None
    confs = [_scan_confidence(base, s, args.n_views, cache, args.binarize_threshold) for s in scans]
    gts = [read_volume(base / s["gt"], as_mask=True) for s in scans]
    result = sweep(confs, gts, tau1s, tau2s, args.connectivity, weights, args.jobs)
    _emit(result.to_csv(), args.out)
    return EXIT_OK


def write_phantom_dataset(out_dir, spec: PhantomSpec, noise: VoterNoiseModel, scans: int = 1,
                          n_views: int = 24, fmt: str = "mvol") -> dict:
    """Generate ``scans`` phantoms (seeds ``spec.seed + i``) in emit/collect layout.

    Each scan directory holds the reference mask, the cosmetic image, a view
    manifest whose mask files are the simulated per-view predictions (already
    in view space), and the native-space confidence map.
    """
    out_dir = Path(out_dir)
    entries = []
    for i in range(scans):
        sid = f"scan{i:03d}"
        sdir = out_dir / sid
        sdir.mkdir(parents=True, exist_ok=True)
        s_spec = replace(spec, seed=spec.seed + i)
        s_noise = replace(noise, seed=noise.seed + i)
        gt, image = generate_phantom(s_spec)
        views = simulate_views(gt, s_noise, n_views)
        write_volume(gt, sdir / f"gt{SUFFIX[fmt]}", fmt)
        write_volume(image, sdir / f"image{SUFFIX[fmt]}", fmt)
        manifest = emit_views(sdir / f"image{SUFFIX[fmt]}", sdir, fmt)
        for e, v in zip(manifest["entries"], views):
            t = xform.view_transform(xform.ViewKey.parse(e["key"]))
            write_volume(xform.apply(t, v), sdir / e["mask"], fmt)
        write_volume(confidence_map(views), sdir / f"confidence{SUFFIX[fmt]}", fmt)
        entries.append({"id": sid, "gt": f"{sid}/gt{SUFFIX[fmt]}",
                        "views": f"{sid}/manifest.json",
                        "confidence": f"{sid}/confidence{SUFFIX[fmt]}", "n_views": n_views})
    doc = {"schema": DATASET_SCHEMA, "phantom": json.loads(spec.to_json()),
           "noise": {k: getattr(noise, k) for k in noise.__dataclass_fields__}, "scans": entries}
    _write_json(out_dir / "dataset.json", doc)
    return doc


def _cmd_phantom(args) -> int:
    fields = {}
    noise = {}
    if args.spec:
        fields = json.loads(Path(args.spec).read_text())
        noise = fields.pop("noise", {})
    fields.setdefault("seed", args.seed)
    noise.setdefault("seed", fields["seed"])
    doc = write_phantom_dataset(args.out_dir, PhantomSpec(**fields), VoterNoiseModel(**noise),
                                args.scans, args.n_views, args.format)
    print(f"wrote {len(doc['scans'])} phantom scan(s) to {args.out_dir}")
    return EXIT_OK


COMMANDS = {
    "emit-views": _cmd_emit_views,
    "fuse": _cmd_fuse,
    "metrics": _cmd_metrics,
    "sweep": _cmd_sweep,
    "phantom": _cmd_phantom,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except MissingViewsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (DataError, VolumeFormatError, PhantomError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
