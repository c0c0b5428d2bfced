"""Command-line pipeline driver.

Commands: segment, match, transfer, bench, deform, decimate.
Exit codes: 0 success, 2 config/input error, 3 no grasps in region,
4 grasp unreachable, 5 numerical failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from ._util import atomic_write
from .config import PipelineConfig
from .descriptors import wks
from .errors import (
    ConfigError,
    GraspMapError,
    GraspUnreachableError,
    MeshFormatError,
    MeshValidationError,
    NoGraspsInRegionError,
    NumericalError,
)
from .fmap import PointMap, bijective_refine, fit_fmap, icp_refine
from .grasp import (
    TransferConfig,
    build_grasp_model,
    generate_antipodal_grasps,
    load_grasps,
    save_grasps,
    transfer_pipeline,
)
from .harness import (
    compare_methods,
    default_manifest,
    geodesic_error,
    load_manifest,
    save_manifest,
)
from .mesh import (
    DeformationSpec,
    Segmentation,
    coordinate_colors,
    decimate_quadric,
    kmeans_segment,
    label_colors,
    load_mesh,
    save_obj,
    save_ply,
    synth_deform,
)
from .registration import CpdConfig, cpd_nonrigid, icp_rigid, pointmap_from_registration
from .spectral import cached_basis, compute_basis

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_GRASPS = 3
EXIT_UNREACHABLE = 4
EXIT_NUMERICAL = 5


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config file (key = value text)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out-dir", default=".", help="output directory")
    common.add_argument("--method", choices=("fm", "cpd", "icp"), help="correspondence method")
    return common


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="graspmap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", parents=[common], help="k-means region segmentation")
    p.add_argument("mesh")
    p.add_argument("--n-clusters", type=int, help="override config n_clusters")

    p = sub.add_parser("match", parents=[common], help="compute a shape correspondence")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--gt", help="'identity' or a pointmap file for error reporting")

    p = sub.add_parser("transfer", parents=[common], help="transfer grasps to a target mesh")
    p.add_argument("source")
    p.add_argument("segmentation", help="segmentation JSON from the segment command")
    p.add_argument("region_id", type=int)
    p.add_argument("target")
    p.add_argument("--grasps", help="ranked grasp list JSON (external planner output)")
    p.add_argument("--generate", type=int, metavar="N", help="generate N antipodal grasps")
    p.add_argument("--pointmap", help="precomputed pointmap file; computed inline if absent")

    p = sub.add_parser("bench", parents=[common], help="three-method comparison report")
    p.add_argument("manifest", help="dataset manifest JSON, or 'builtin:large'/'builtin:small'")

    p = sub.add_parser("deform", parents=[common], help="synthetic deformation generator")
    p.add_argument("mesh")
    p.add_argument("--kind", choices=("bend", "twist", "stretch"), required=True)
    p.add_argument("--axis", type=float, nargs=3, default=(0.0, 0.0, 1.0))
    p.add_argument("--magnitude", type=float, required=True)
    p.add_argument("--interval", type=float, nargs=2)
    p.add_argument("--out", required=True)

    p = sub.add_parser("decimate", parents=[common], help="quadric mesh simplification")
    p.add_argument("mesh")
    p.add_argument("--target", type=int, required=True, help="target vertex count")
    p.add_argument("--out", required=True)
    return parser


def _load_config(args):
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "method", None):
        cfg.method = args.method
    return cfg.validate()


def cmd_segment(args):
    cfg = _load_config(args)
    mesh = load_mesh(args.mesh)
    n_clusters = args.n_clusters or cfg.n_clusters
    seg = kmeans_segment(mesh, n_clusters, seed=cfg.seed)
    stem = os.path.join(args.out_dir, os.path.splitext(os.path.basename(args.mesh))[0])
    seg.save(stem + "_segmentation.json")
    save_ply(stem + "_segments.ply", mesh, vertex_colors=label_colors(seg.labels, n_clusters))
    print(f"segmented {mesh.n_vertices} vertices into {n_clusters} clusters:")
    for cid, size in enumerate(seg.cluster_sizes()):
        print(f"  region {cid}: {size} vertices")
    print(f"wrote {stem}_segmentation.json and {stem}_segments.ply")
    return EXIT_OK


def _compute_pointmap(cfg, source, target, cache_dir=None):
    """Correspondence via the configured method; returns (pmap, extras)."""
    if cfg.method == "fm":
        if cache_dir:
            os.makedirs(cache_dir, exist_ok=True)
            basis_x = cached_basis(cache_dir, source, cfg.k)
            basis_x.mesh = source
            basis_y = cached_basis(cache_dir, target, cfg.k)
            basis_y.mesh = target
        else:
            basis_x = compute_basis(source, cfg.k)
            basis_y = compute_basis(target, cfg.k)
        field_f = wks(basis_x, cfg.d, cfg.sigma_factor)
        field_h = wks(basis_y, cfg.d, cfg.sigma_factor)
        fmap_cfg = cfg.fmap_config()
        fm = fit_fmap(basis_x, basis_y, field_f, field_h, fmap_cfg)
        if cfg.bijective:
            fm_back = fit_fmap(basis_y, basis_x, field_h, field_f, fmap_cfg)
            pmap, _ = bijective_refine(fm, fm_back, iters=cfg.refine_iters)
            return pmap, fm
        fm_refined, pmap = icp_refine(fm, iters=cfg.refine_iters)
        return pmap, fm_refined
    if cfg.method == "cpd":
        result = cpd_nonrigid(source.vertices, target.vertices, CpdConfig())
        return pointmap_from_registration(result.pointmap.assignment, source, target), result
    result = icp_rigid(source.vertices, target.vertices)
    return pointmap_from_registration(result.pointmap.assignment, source, target), result


def cmd_match(args):
    cfg = _load_config(args)
    source = load_mesh(args.source)
    target = load_mesh(args.target)
    os.makedirs(args.out_dir, exist_ok=True)
    cache_dir = os.path.join(args.out_dir, "basis_cache")
    pmap, extra = _compute_pointmap(cfg, source, target, cache_dir=cache_dir)

    pmap_path = os.path.join(args.out_dir, "pointmap.txt")
    pmap.save(pmap_path)
    written = [pmap_path]
    if cfg.method == "fm" and hasattr(extra, "C"):
        fmap_prefix = os.path.join(args.out_dir, "fmap")
        extra.save(fmap_prefix)
        written += [fmap_prefix + ".npy", fmap_prefix + ".json"]

    src_colors = coordinate_colors(source.vertices)
    tgt_colors = src_colors[pmap.assignment]
    src_ply = os.path.join(args.out_dir, "correspondence_source.ply")
    tgt_ply = os.path.join(args.out_dir, "correspondence_target.ply")
    save_ply(src_ply, source, vertex_colors=src_colors)
    save_ply(tgt_ply, target, vertex_colors=tgt_colors)
    written += [src_ply, tgt_ply]

    if args.gt:
        if args.gt == "identity":
            if target.n_vertices != source.n_vertices:
                raise ConfigError("--gt identity needs equal vertex counts")
            truth = PointMap(np.arange(source.n_vertices), n_source=source.n_vertices)
        else:
            truth = PointMap.load(args.gt, n_source=source.n_vertices)
        err = geodesic_error(pmap, truth, source)
        print(f"mean geodesic error: {err.mean:.6f} of diameter (median {err.median:.6f})")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_transfer(args):
    cfg = _load_config(args)
    source = load_mesh(args.source)
    target = load_mesh(args.target)
    segmentation = Segmentation.load(args.segmentation)
    gripper = cfg.gripper()
    os.makedirs(args.out_dir, exist_ok=True)

    if args.grasps:
        grasps = load_grasps(args.grasps, mesh=source)
    elif args.generate:
        region = segmentation.with_region(args.region_id).region_vertices()
        grasps = generate_antipodal_grasps(
            source, region, gripper, count=args.generate, seed=cfg.seed
        )
        save_grasps(os.path.join(args.out_dir, "generated_grasps.json"), grasps)
    else:
        raise ConfigError("provide --grasps FILE or --generate N")
    model = build_grasp_model(source, segmentation, args.region_id, grasps)

    if args.pointmap:
        pmap = PointMap.load(args.pointmap, n_source=source.n_vertices)
    else:
        pmap, _ = _compute_pointmap(cfg, source, target)

    transfer_cfg = TransferConfig(gripper=gripper, replan=cfg.replan_config())
    result = transfer_pipeline(model, target, pmap, transfer_cfg)

    result_path = os.path.join(args.out_dir, "grasp_result.json")
    result.save(result_path)
    scene_path = os.path.join(args.out_dir, "scene.ply")
    _save_scene(scene_path, target, result)
    print(
        f"transferred grasp rank {result.rank}; region accurate: {result.region_accurate}"
    )
    print(f"wrote {result_path} and {scene_path}")
    return EXIT_OK


def _save_scene(path, target, result):
    """Target mesh PLY with contact markers (red) and mapped targets (green)."""
    colors = np.full((target.n_vertices, 3), 180, dtype=np.uint8)
    for t in np.asarray(result.mapped_targets):
        vid = int(np.argmin(np.einsum("ij,ij->i", target.vertices - t, target.vertices - t)))
        colors[vid] = (40, 200, 40)
    for contact in result.grasp.contacts:
        colors[contact.vertex_id] = (220, 30, 30)
    save_ply(path, target, vertex_colors=colors)


def cmd_bench(args):
    cfg = _load_config(args)
    if args.manifest.startswith("builtin:"):
        manifest = default_manifest(args.manifest.split(":", 1)[1], seed=cfg.seed)
    else:
        manifest = load_manifest(args.manifest)
        if getattr(args, "seed", None) is not None:
            manifest["seed"] = args.seed
    os.makedirs(args.out_dir, exist_ok=True)
    artifacts = os.path.join(args.out_dir, "artifacts")
    os.makedirs(artifacts, exist_ok=True)
    report = compare_methods(manifest, out_dir=artifacts, fmap_cfg=cfg.fmap_config())
    csv_path = os.path.join(args.out_dir, "report.csv")
    json_path = os.path.join(args.out_dir, "report.json")
    report.save_csv(csv_path)
    report.save_json(json_path)
    for method in ("fm", "cpd", "icp"):
        print(f"{method}: region accuracy {100.0 * report.pass_rate(method):.1f}%")
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


def cmd_deform(args):
    _load_config(args)
    mesh = load_mesh(args.mesh)
    spec = DeformationSpec(
        kind=args.kind,
        axis=tuple(args.axis),
        magnitude=args.magnitude,
        interval=tuple(args.interval) if args.interval else None,
    )
    out = synth_deform(mesh, spec)
    save_obj(args.out, out)
    print(f"wrote {args.out} ({out.n_vertices} vertices)")
    return EXIT_OK


def cmd_decimate(args):
    _load_config(args)
    mesh = load_mesh(args.mesh)
    out = decimate_quadric(mesh, args.target)
    save_obj(args.out, out)
    print(f"decimated {mesh.n_vertices} -> {out.n_vertices} vertices; wrote {args.out}")
    return EXIT_OK


COMMANDS = {
    "segment": cmd_segment,
    "match": cmd_match,
    "transfer": cmd_transfer,
    "bench": cmd_bench,
    "deform": cmd_deform,
    "decimate": cmd_decimate,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, MeshFormatError, MeshValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoGraspsInRegionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_GRASPS
    except GraspUnreachableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except (NumericalError, GraspMapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
