"""Command-line driver for the full pipeline: mesh sampling, depth-map
tracing, fusion, RCS sweeps, sweep comparison and dataset generation.

Exit codes: 0 success, 2 bad input or arguments, 3 refinement backend failure.
Set POINTSBR_WORKERS to parallelize sweep angles.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import fileio, fusion, oracle, primitives, sweep, tracing
from .config import SweepConfig, with_overrides
from .errors import BackendError, PointSbrError
from .geometry import PointCloud, make_frame, normalize_to_box, sample_mesh

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_BACKEND = 3


def _load_config(args) -> SweepConfig:
    cfg = SweepConfig.from_file(args.config) if args.config else SweepConfig()
    cfg = with_overrides(cfg, args.set or [])
    return cfg.validate()


def _load_cloud(path) -> PointCloud:
    if str(path).lower().endswith(".ply"):
        return fileio.read_ply(path)
    return fileio.read_xyz(path)


def _write_cloud(path, cloud: PointCloud) -> None:
    if str(path).lower().endswith(".ply"):
        fileio.write_ply(path, cloud)
    else:
        fileio.write_xyz(path, cloud)


def _sweep_angles(cfg: SweepConfig, args) -> list[tuple[float, float]]:
    if getattr(args, "angles", None):
        out = []
        for part in args.angles.split(","):
            t, p = part.strip().split(":")
            out.append((float(t), float(p)))
        return out
    return cfg.sweep_angles()


def _view_name(idx: int, theta: float, phi: float, ext: str) -> str:
    return f"view{idx:03d}_t{theta:.2f}_p{phi:.2f}.{ext}"


def cmd_config_dump(args) -> int:
    cfg = _load_config(args)
    sys.stdout.write(cfg.to_text())
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = _load_config(args)
    mesh = fileio.read_obj(args.mesh)
    if cfg.target_extent > 0:
        mesh = normalize_to_box(mesh, cfg.target_extent)
    cloud = sample_mesh(mesh, cfg.sample_count, cfg.seed)
    _write_cloud(args.out, cloud)
    print(f"sampled {cloud.points.shape[0]} points -> {args.out}")
    return EXIT_OK


def cmd_pri(args) -> int:
    cfg = _load_config(args)
    cloud = _load_cloud(args.cloud)
    center, radius = cloud.bounding_sphere()
    backend = sweep.make_backend(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    views = _sweep_angles(cfg, args) if args.angles else list(cfg.fusion_views)
    for idx, (theta, phi) in enumerate(views):
        frame = make_frame(theta, phi, center=center, radius=radius, pitch=cfg.pitch)
        coarse = tracing.trace_coarse(cloud, frame, cfg.k_top, cfg.rel_radius)
        if args.keep_coarse:
            fileio.write_cdm1(
                os.path.join(args.out_dir, _view_name(idx, theta, phi, "cdm1")), coarse)
        g = tracing.refine(backend, coarse)
        fileio.write_gfb1(
            os.path.join(args.out_dir, _view_name(idx, theta, phi, "gfb1")), g)
    print(f"wrote {len(views)} refined view(s) -> {args.out_dir}")
    return EXIT_OK


def cmd_refine(args) -> int:
    cfg = _load_config(args)
    backend = sweep.make_backend(cfg)
    coarse = fileio.read_cdm1(args.coarse)
    fileio.write_gfb1(args.out, tracing.refine(backend, coarse))
    print(f"refined {args.coarse} -> {args.out}")
    return EXIT_OK


def cmd_fuse(args) -> int:
    cfg = _load_config(args)
    gfbs = [fusion.edge_filter(fileio.read_gfb1(p)) for p in args.gfbs]
    records = fusion.fuse(gfbs, cfg.fusion_resolution)
    centers, normals, radii = fusion.make_splats(records)
    fileio.write_spl1(args.out, centers, normals, radii)
    print(f"fused {len(gfbs)} view(s) into {centers.shape[0]} splats -> {args.out}")
    return EXIT_OK


def _write_sweep(path, rows) -> None:
    fileio.write_sweep_csv(path, rows)
    print(f"wrote {len(rows)} sweep row(s) -> {path}")


def cmd_rcs_po(args) -> int:
    cfg = _load_config(args)
    cloud = _load_cloud(args.cloud)
    rows = sweep.point_po_sweep(cloud, _sweep_angles(cfg, args), cfg)
    _write_sweep(args.out, rows)
    return EXIT_OK


def cmd_rcs_mbc(args) -> int:
    cfg = _load_config(args)
    if str(args.geometry).lower().endswith(".spl1"):
        from .bounce import SplatScene

        centers, normals, radii = fileio.read_spl1(args.geometry)
        scene = SplatScene.build(centers, normals, radii)
    else:
        scene, _ = sweep.build_splat_scene(_load_cloud(args.geometry), cfg)
    rows = sweep.splat_mbc_sweep(scene, _sweep_angles(cfg, args), cfg)
    _write_sweep(args.out, rows)
    return EXIT_OK


def cmd_rcs_oracle(args) -> int:
    cfg = _load_config(args)
    mesh = fileio.read_obj(args.mesh)
    if cfg.target_extent > 0:
        mesh = normalize_to_box(mesh, cfg.target_extent)
    scene = oracle.MeshScene.build(mesh)
    rows = sweep.mesh_reference_sweep(scene, _sweep_angles(cfg, args), cfg)
    _write_sweep(args.out, rows)
    return EXIT_OK


def cmd_compare(args) -> int:
    a = fileio.read_sweep_csv(args.first)
    b = fileio.read_sweep_csv(args.second)
    rmse = fileio.sweep_rmse(a, b)
    print(f"rmse_db={rmse:.6f}")
    if args.plot:
        _plot_sweeps(args.plot, a, b, args.first, args.second)
        print(f"wrote plot -> {args.plot}")
    return EXIT_OK


def _plot_sweeps(path, a, b, label_a, label_b) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # pick whichever angle column actually varies for the x axis
    axis = 1 if np.ptp(a[:, 1]) >= np.ptp(a[:, 0]) else 0
    name = "phi" if axis == 1 else "theta"
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(a[:, axis], a[:, 2], label=os.path.basename(str(label_a)))
    ax.plot(b[:, axis], b[:, 2], "--", label=os.path.basename(str(label_b)))
    ax.set_xlabel(f"{name} (deg)")
    ax.set_ylabel("RCS (dBsm)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_gen_dataset(args) -> int:
    cfg = _load_config(args)
    rng = np.random.default_rng(cfg.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    families = primitives.shape_families()
    extent = cfg.target_extent if cfg.target_extent > 0 else 3.0
    manifest = ["pair,shape,count,rel_radius,theta_deg,phi_deg,cdm1,gfb1"]
    for idx in range(args.pairs):
        name = families[int(rng.integers(len(families)))]
        mesh = normalize_to_box(primitives.random_shape(name, rng), extent)
        count = int(rng.integers(10000, 50001))
        rel_radius = float(rng.uniform(1.0, 3.0))
        theta = float(np.degrees(np.arccos(rng.uniform(-1.0, 1.0))))
        phi = float(rng.uniform(0.0, 360.0))
        cloud = sample_mesh(mesh, count, int(rng.integers(2**31)))
        center, radius = cloud.bounding_sphere()
        frame = make_frame(theta, phi, center=center, radius=radius, pitch=cfg.pitch)
        coarse = tracing.trace_coarse(cloud, frame, cfg.k_top, rel_radius)
        reference = oracle.render_reference_gfb(oracle.MeshScene.build(mesh), frame)
        cdm_name = f"pair{idx:04d}.cdm1"
        gfb_name = f"pair{idx:04d}.gfb1"
        fileio.write_cdm1(os.path.join(args.out_dir, cdm_name), coarse)
        fileio.write_gfb1(os.path.join(args.out_dir, gfb_name), reference)
        manifest.append(f"{idx},{name},{count},{rel_radius:.6f},"
                        f"{theta:.6f},{phi:.6f},{cdm_name},{gfb_name}")
    with open(os.path.join(args.out_dir, "manifest.csv"), "w",
              encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(manifest) + "\n")
    print(f"wrote {args.pairs} coarse/reference pair(s) -> {args.out_dir}")
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config value (repeatable)")


def _add_angles(p: argparse.ArgumentParser) -> None:
    p.add_argument("--angles", metavar="T:P,T:P,...",
                   help="explicit (theta, phi) list instead of the config sweep")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pointsbr",
        description="Point-cloud ray-tube RCS simulator",
        epilog="POINTSBR_WORKERS=N parallelizes sweep angles over N threads.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("config", help="configuration utilities")
    csub = p.add_subparsers(dest="config_command", required=True)
    pd = csub.add_parser("dump", help="print the effective configuration")
    _add_common(pd)
    pd.set_defaults(func=cmd_config_dump)

    p = sub.add_parser("sample", help="sample a mesh surface into a point cloud")
    _add_common(p)
    p.add_argument("mesh", help="input OBJ mesh")
    p.add_argument("out", help="output cloud (.xyz or .ply)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("pri", help="trace and refine per-view depth maps")
    _add_common(p)
    _add_angles(p)
    p.add_argument("cloud", help="input cloud (.xyz or .ply)")
    p.add_argument("out_dir", help="output directory for GFB1 files")
    p.add_argument("--keep-coarse", action="store_true",
                   help="also write the unrefined CDM1 maps")
    p.set_defaults(func=cmd_pri)

    p = sub.add_parser("refine", help="refine one coarse depth map file")
    _add_common(p)
    p.add_argument("coarse", help="input CDM1 file")
    p.add_argument("out", help="output GFB1 file")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("fuse", help="fuse edge-filtered views into splats")
    _add_common(p)
    p.add_argument("out", help="output SPL1 file")
    p.add_argument("gfbs", nargs="+", help="input GFB1 files")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("rcs-po", help="single-bounce sweep from per-angle views")
    _add_common(p)
    _add_angles(p)
    p.add_argument("cloud", help="input cloud (.xyz or .ply)")
    p.add_argument("out", help="output sweep CSV")
    p.set_defaults(func=cmd_rcs_po)

    p = sub.add_parser("rcs-mbc", help="multi-bounce sweep on fused splats")
    _add_common(p)
    _add_angles(p)
    p.add_argument("geometry", help="input cloud (.xyz/.ply) or splats (.spl1)")
    p.add_argument("out", help="output sweep CSV")
    p.set_defaults(func=cmd_rcs_mbc)

    p = sub.add_parser("rcs-oracle", help="reference sweep tracing a mesh")
    _add_common(p)
    _add_angles(p)
    p.add_argument("mesh", help="input OBJ mesh")
    p.add_argument("out", help="output sweep CSV")
    p.set_defaults(func=cmd_rcs_oracle)

    p = sub.add_parser("compare", help="RMSE between two sweep CSVs")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--plot", help="optional SVG overlay plot")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen-dataset", help="paired coarse/reference depth maps")
    _add_common(p)
    p.add_argument("out_dir", help="output directory")
    p.add_argument("--pairs", type=int, default=32, help="number of pairs")
    p.set_defaults(func=cmd_gen_dataset)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (PointSbrError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
