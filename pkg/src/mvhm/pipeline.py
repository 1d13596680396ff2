"""
Dataset generation, checking, evaluation and triangulation.

Output tree of ``generate``::

    out/
      manifest.json
      generate.log
      assets/template.obj  assets/skin_weights.txt  assets/coarsening.txt
      samples/<id>/annotation.json  mesh.txt  view<k>_{rgb,depth,mask}.png

Every sample derives its own seed from the master seed, so serial and
parallel runs write identical bytes.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache

import numpy as np
from PIL import Image

from . import io
from .camera import Extrinsics, Intrinsics, build_ring, focal_for_fill, project, triangulate, reprojection_errors
from .config import check_config, load_config, merge
from .errors import BehindCameraError, DegenerateReferenceError, ReachabilityError, TriangulationError, ValidationError
from .graphops import coarsen, hierarchy_problems, halving_ok
from .handmesh import generate_template, skin
from .metrics import evaluate_poses
from .render import Light, mask_vertex_consistency, rasterize
from .rotation import axis_angle_matrix, normalize
from .skeleton import rest_keypoints, sample_pose
from .spinmatch import spin_match

log = logging.getLogger("mvhm")

PALM_JOINTS = [0, 5, 9, 13, 17]
PROJECTION_TOL = 1e-6
MASK_FRACTION = 0.05
_MASK64 = (1 << 64) - 1


def splitmix64(x):
    """One step of the splitmix64 generator; maps a 64-bit int to a mixed 64-bit int."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def sample_seed(master, index):
    return splitmix64((splitmix64(master & _MASK64) + index) & _MASK64)


def sample_id(index):
    return f"{index:06d}"


def palm_center(C):
    return np.asarray(C, dtype=float)[PALM_JOINTS].mean(axis=0)


def palm_normal(C):
    C = np.asarray(C, dtype=float)
    return normalize(np.cross(C[5] - C[0], C[17] - C[0]))


@lru_cache(maxsize=4)
def template_for(budget):
    return generate_template(budget)


def intrinsics_for(cfg):
    res = int(cfg["render"]["resolution"])
    f = cfg["rig"].get("focal")
    if f is None:
        mesh = template_for(int(cfg["mesh"]["vertex_budget"]))
        r = np.max(np.linalg.norm(mesh.rest_vertices - palm_center(rest_keypoints()), axis=1))
        f = focal_for_fill(float(cfg["rig"]["radius"]), r, res, float(cfg["rig"]["fill"]))
    return Intrinsics(float(f), float(f), res / 2.0, res / 2.0, res, res)


def hand_rig(C, intr, cfg):
    """Camera ring around the posed hand: axis wrist -> middle MCP, first camera on the palm side."""
    C = np.asarray(C, dtype=float)
    return build_ring(palm_center(C), C[9] - C[0], float(cfg["rig"]["radius"]), int(cfg["rig"]["views"]),
                      intr, start_dir=palm_normal(C), fallback_up=palm_normal(C))


def sample_light(rng, cfg):
    r = cfg["render"]
    d = normalize(np.asarray(r["light_dir_camera"], dtype=float))
    axis = np.cross(d, rng.standard_normal(3))
    angle = np.deg2rad(rng.uniform(0.0, float(r["light_jitter_deg"])))
    d = axis_angle_matrix(axis, angle) @ d if np.linalg.norm(axis) > 0 else d
    lo, hi = r["light_intensity"]
    return Light(tuple(float(x) for x in d), float(rng.uniform(lo, hi)))


def _save_png(path, arr):
    Image.fromarray(arr).save(path, format="PNG", compress_level=6)


def make_sample(index, cfg, pose=None):
    """
    Build and write one sample under out/samples/<id>. Returns ("ok", id, {relpath: sha256})
    or ("skip", id, reason).
    """
    sid = sample_id(index)
    seed = sample_seed(int(cfg["seed"]), index)
    rng = np.random.default_rng(seed)
    mesh = template_for(int(cfg["mesh"]["vertex_budget"]))
    C = sample_pose(seed, cfg["pose_limits"]) if pose is None else np.asarray(pose, dtype=float)
    try:
        sol = spin_match(mesh.skeleton, C)
    except (ReachabilityError, DegenerateReferenceError) as exc:
        return "skip", sid, str(exc)
    V = skin(mesh, sol).vertices
    intr = intrinsics_for(cfg)
    rig = hand_rig(C, intr, cfg)
    light = sample_light(rng, cfg)
    r = cfg["render"]
    scale = float(r["depth_scale"])

    views = []
    for k, (vi, ve) in enumerate(rig.views):
        try:
            u, v, z = project(vi, ve, C)
        except BehindCameraError as exc:
            return "skip", sid, f"view {k}: {exc}"
        views.append((k, vi, ve, u, v, z))

    rel = os.path.join("samples", sid)
    out_dir = os.path.join(cfg["out"], rel)
    os.makedirs(out_dir, exist_ok=True)
    files = {}
    records = []
    for k, vi, ve, u, v, z in views:
        img = rasterize(V, mesh.faces, vi, ve, light, background=r["background"], albedo=r["albedo"],
                        near=float(r["near"]), far=float(r["far"]))
        names = {kind: f"view{k}_{kind}.png" for kind in ("rgb", "depth", "mask")}
        _save_png(os.path.join(out_dir, names["rgb"]), img.rgb)
        d16 = np.rint(img.depth / scale).astype(np.uint16)
        _save_png(os.path.join(out_dir, names["depth"]), d16)
        _save_png(os.path.join(out_dir, names["mask"]), img.mask * np.uint8(255))
        records.append({
            "view": k, "width": vi.width, "height": vi.height,
            "K": vi.K.tolist(), "Rt": ve.Rt.tolist(),
            "keypoints2d": np.stack([u, v], axis=1).tolist(), "joint_depths": z.tolist(),
            "rgb": names["rgb"], "depth": names["depth"], "mask": names["mask"],
        })
    io.write_vertices(os.path.join(out_dir, "mesh.txt"), V)
    ann = {
        "schema": io.ANNOTATION_SCHEMA, "sample_id": sid, "index": index, "seed": seed,
        "keypoints3d": C.tolist(), "spins": sol.spins.tolist(), "mesh": "mesh.txt",
        "num_vertices": int(len(V)), "depth_scale_mm": scale,
        "light": {"direction_camera": list(light.direction), "intensity": light.intensity},
        "views": records,
    }
    io.dump_json(os.path.join(out_dir, "annotation.json"), ann)
    for name in sorted(os.listdir(out_dir)):
        files[f"samples/{sid}/{name}"] = io.sha256_file(os.path.join(out_dir, name))
    return "ok", sid, files


def _worker(args):
    index, cfg, pose = args
    return make_sample(index, cfg, pose)


def write_assets(cfg):
    mesh = template_for(int(cfg["mesh"]["vertex_budget"]))
    adir = os.path.join(cfg["out"], "assets")
    os.makedirs(adir, exist_ok=True)
    io.write_obj(os.path.join(adir, "template.obj"), mesh.rest_vertices, mesh.faces)
    io.write_weights(os.path.join(adir, "skin_weights.txt"), mesh.skin_weights)
    c = cfg["coarsening"]
    h = coarsen(mesh.adjacency, int(c["levels"]), int(c["seed"]))
    io.write_hierarchy(os.path.join(adir, "coarsening.txt"), h)
    return {f"assets/{n}": io.sha256_file(os.path.join(adir, n)) for n in sorted(os.listdir(adir))}


def generate(cfg=None, out=None, count=None, seed=None, poses=None, workers=None):
    """Write a dataset; returns the manifest dict. Parameters override `cfg`."""
    overrides = {"count": count, "seed": seed, "poses": poses, "workers": workers, "out": out}
    cfg = merge(load_config() if cfg is None else cfg, overrides)
    check_config(cfg)
    if not cfg.get("out"):
        raise ValidationError("no output directory given")
    os.makedirs(cfg["out"], exist_ok=True)
    marker = os.path.join(cfg["out"], "PARTIAL")
    open(marker, "w").close()

    pose_list = io.read_pose_file(cfg["poses"]) if cfg.get("poses") else None
    n = int(cfg["count"])
    if pose_list is not None:
        n = min(n, len(pose_list))
    jobs = [(i, cfg, None if pose_list is None else pose_list[i]) for i in range(n)]

    files, samples, skipped, log_lines = {}, [], [], []
    try:
        files.update(write_assets(cfg))
        w = int(cfg.get("workers") or 1)
        if w > 1:
            with ProcessPoolExecutor(max_workers=w) as ex:
                results = list(ex.map(_worker, jobs, chunksize=max(1, n // (4 * w))))
        else:
            results = [_worker(j) for j in jobs]
        for status, sid, payload in results:
            if status == "ok":
                samples.append(sid)
                files.update(payload)
            else:
                skipped.append({"sample_id": sid, "reason": payload})
                log_lines.append(f"skip {sid}: {payload}")
                log.warning("skipped sample %s: %s", sid, payload)
        with open(os.path.join(cfg["out"], "generate.log"), "w") as fh:
            fh.writelines(line + "\n" for line in log_lines)
    except OSError:
        _write_manifest(cfg, files, samples, skipped, complete=False)
        raise
    manifest = _write_manifest(cfg, files, samples, skipped, complete=True)
    os.remove(marker)
    return manifest


def _write_manifest(cfg, files, samples, skipped, complete):
    mesh = template_for(int(cfg["mesh"]["vertex_budget"]))
    public = {k: v for k, v in cfg.items() if k not in ("out", "workers")}
    manifest = {
        "schema": io.MANIFEST_SCHEMA,
        "annotation_schema": io.ANNOTATION_SCHEMA,
        "complete": complete,
        "config": public,
        "template": {"file": "assets/template.obj", "weights": "assets/skin_weights.txt",
                     "num_vertices": mesh.num_vertices, "num_faces": int(len(mesh.faces))},
        "coarsening": {"file": "assets/coarsening.txt", "levels": int(cfg["coarsening"]["levels"])},
        "depth_scale_mm": float(cfg["render"]["depth_scale"]),
        "requested": int(cfg["count"]),
        "generated": len(samples),
        "skipped": skipped,
        "samples": samples,
        "files": dict(sorted(files.items())),
    }
    io.dump_json(os.path.join(cfg["out"], "manifest.json"), manifest)
    return manifest


# ----------------------------------------------------------------- checks

def load_manifest(root):
    path = os.path.join(root, "manifest.json")
    m = io.load_json(path)
    if m.get("schema") != io.MANIFEST_SCHEMA:
        raise ValidationError(f"{path}: unsupported manifest schema {m.get('schema')!r}")
    return m


def annotation_path(root, sid):
    return os.path.join(root, "samples", sid, "annotation.json")


def view_camera(rec):
    intr = Intrinsics.from_K(rec["K"], rec["width"], rec["height"])
    return intr, Extrinsics.from_Rt(rec["Rt"])


def projection_consistency(ann, tol=PROJECTION_TOL):
    """(consistent joint observations, total) for one annotation."""
    C = np.array(ann["keypoints3d"])
    good = total = 0
    for rec in ann["views"]:
        intr, extr = view_camera(rec)
        u, v, z = project(intr, extr, C, eps=0.0)
        kp = np.array(rec["keypoints2d"])
        ok = (np.abs(u - kp[:, 0]) <= tol) & (np.abs(v - kp[:, 1]) <= tol) \
            & (np.abs(z - np.array(rec["joint_depths"])) <= tol)
        good += int(ok.sum())
        total += len(ok)
    return good, total


def load_render(sample_dir, rec, scale):
    from .render import RenderOutput

    rgb = np.asarray(Image.open(os.path.join(sample_dir, rec["rgb"])))
    depth = np.asarray(Image.open(os.path.join(sample_dir, rec["depth"]))).astype(float) * scale
    mask = (np.asarray(Image.open(os.path.join(sample_dir, rec["mask"]))) > 0).astype(np.uint8)
    return RenderOutput(rgb, depth, mask)


def check_dataset(root, mask_fraction=MASK_FRACTION, seed=0, verify_hashes=True):
    """
    Verify a generated dataset: file hashes, projection consistency of every
    joint observation, depth/mask coherence and mask-vertex consistency on a
    seeded `mask_fraction` of the images. Returns a report dict.
    """
    m = load_manifest(root)
    problems = []
    if not m.get("complete", False):
        problems.append("manifest marks the dataset as partial")
    if verify_hashes:
        for rel, digest in m["files"].items():
            p = os.path.join(root, rel)
            if not os.path.exists(p):
                problems.append(f"missing file {rel}")
            elif io.sha256_file(p) != digest:
                problems.append(f"hash mismatch for {rel}")
    scale = float(m["depth_scale_mm"])
    good = total = 0
    images = []
    for sid in m["samples"]:
        ann = io.load_annotation(annotation_path(root, sid))
        g, t = projection_consistency(ann)
        good += g
        total += t
        images += [(sid, k) for k in range(len(ann["views"]))]
    rng = np.random.default_rng(seed)
    n_pick = max(1, int(np.ceil(mask_fraction * len(images)))) if images else 0
    picks = sorted(rng.choice(len(images), size=n_pick, replace=False).tolist()) if n_pick else []
    mask_scores, coherent = [], True
    for p in picks:
        sid, k = images[p]
        sdir = os.path.join(root, "samples", sid)
        ann = io.load_annotation(os.path.join(sdir, "annotation.json"))
        rec = ann["views"][k]
        out = load_render(sdir, rec, scale)
        coherent &= bool(np.array_equal(out.mask == 1, out.depth > 0))
        V = io.read_vertices(os.path.join(sdir, ann["mesh"]))
        frac, _ = mask_vertex_consistency(V, *view_camera(rec), out)
        mask_scores.append(frac)
    if not coherent:
        problems.append("depth/mask incoherent")
    n_images = len(images)
    report = {
        "samples": len(m["samples"]),
        "images": n_images,
        "projection_consistent": good,
        "projection_total": total,
        "projection_fraction": good / total if total else 1.0,
        "mask_images_checked": len(mask_scores),
        "mask_vertex_consistency": float(np.mean(mask_scores)) if mask_scores else 1.0,
        "mask_vertex_consistency_min": float(np.min(mask_scores)) if mask_scores else 1.0,
        "problems": problems,
    }
    if report["projection_fraction"] < 1.0:
        problems.append(f"{total - good} joint observations fail projection consistency")
    if report["mask_vertex_consistency"] < 0.99:
        problems.append("mask-vertex consistency below 99%")
    return report


# ------------------------------------------------------- evaluate / triangulate

def ground_truth(root, ids=None):
    m = load_manifest(root)
    ids = m["samples"] if ids is None else list(ids)
    return {sid: np.array(io.load_annotation(annotation_path(root, sid))["keypoints3d"]) for sid in ids}


def evaluate(pred_file, root, ids=None, steps=100):
    preds = io.read_predictions(pred_file)
    gt = ground_truth(root, ids)
    missing = sorted(set(gt) - set(preds))
    if missing:
        shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
        raise ValidationError(f"{len(missing)} sample ids missing from predictions: {shown}")
    order = sorted(gt)
    return evaluate_poses(np.stack([preds[s] for s in order]), np.stack([gt[s] for s in order]), steps)


def triangulate_sample(ann):
    """DLT keypoints (21, 3) from every view's 2D annotation, and per-joint max reprojection error."""
    cams = [view_camera(rec) for rec in ann["views"]]
    kps = [np.array(rec["keypoints2d"]) for rec in ann["views"]]
    if len(cams) < 2:
        raise TriangulationError(f"sample {ann['sample_id']} has {len(cams)} view(s), need 2")
    X = np.empty((21, 3))
    res = np.empty(21)
    for j in range(21):
        obs = [(i, e, kp[j, 0], kp[j, 1]) for (i, e), kp in zip(cams, kps)]
        X[j] = triangulate(obs)
        res[j] = reprojection_errors(X[j], obs).max()
    return X, res


def triangulate_dataset(root, ids=None):
    """Returns (predictions {id: (21, 3)}, residual report, skipped [(id, reason)])."""
    m = load_manifest(root)
    preds, residuals, skipped = {}, {}, []
    for sid in (m["samples"] if ids is None else ids):
        ann = io.load_annotation(annotation_path(root, sid))
        try:
            X, res = triangulate_sample(ann)
        except TriangulationError as exc:
            skipped.append((sid, str(exc)))
            log.warning("skipped sample %s: %s", sid, exc)
            continue
        preds[sid] = X
        residuals[sid] = float(res.max())
    vals = np.array(list(residuals.values())) if residuals else np.zeros(1)
    report = {"triangulated": len(preds), "skipped": [list(s) for s in skipped],
              "residual_px_max": float(vals.max()), "residual_px_mean": float(vals.mean()),
              "residual_px_median": float(np.median(vals))}
    return preds, report, skipped


def export_coarsening(out, budget=2560, levels=3, seed=0):
    mesh = template_for(int(budget))
    h = coarsen(mesh.adjacency, levels, seed)
    io.write_hierarchy(out, h)
    return h


def check_hierarchy(h):
    return {"levels": h.levels, "sizes": h.sizes(), "real_nodes": h.real_counts(),
            "halving_ok": halving_ok(h), "problems": hierarchy_problems(h)}
