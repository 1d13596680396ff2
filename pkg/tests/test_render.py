import numpy as np
import pytest

from mvhm.camera import Extrinsics, Intrinsics, project
from mvhm.errors import DomainError
from mvhm.pipeline import hand_rig, intrinsics_for
from mvhm.config import load_config
from mvhm.handmesh import skin
from mvhm.render import Light, extract_peak, mask_vertex_consistency, rasterize, render_heatmaps
from mvhm.skeleton import rest_skeleton, sample_pose
from mvhm.spinmatch import spin_match

INTR = Intrinsics(200.0, 200.0, 64.0, 64.0, 128, 128)
IDENT = Extrinsics(np.eye(3), np.zeros(3))


def plane_depth(n, d, u, v, intr=INTR):
    """Depth along the pixel ray of (u, v) where it meets the plane n.x = d."""
    ray = np.array([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0])
    return d / (n @ ray)


def tilted_triangle():
    V = np.array([[-60.0, -60.0, 400.0], [60.0, -60.0, 520.0], [0.0, 60.0, 460.0]])
    return V, np.array([[0, 2, 1]])     # normal toward the camera


def test_single_triangle_depth_matches_ray_plane():
    V, F = tilted_triangle()
    out = rasterize(V, F, INTR, IDENT)
    n = np.cross(V[1] - V[0], V[2] - V[0])
    d = n @ V[0]
    assert out.mask[64, 64] == 1
    for (i, j) in [(64, 64), (60, 70), (70, 58)]:
        assert out.mask[i, j] == 1
        assert abs(out.depth[i, j] - plane_depth(n, d, j + 0.5, i + 0.5)) < 0.01


def test_depth_mask_coherence_and_clip():
    V, F = tilted_triangle()
    out = rasterize(V, F, INTR, IDENT)
    assert np.array_equal(out.mask == 1, out.depth > 0)
    z = out.depth[out.mask == 1]
    assert z.min() >= 10 and z.max() <= 5000
    assert out.rgb.dtype == np.uint8 and out.rgb.shape == (128, 128, 3)


def test_zero_intensity_black_foreground():
    V, F = tilted_triangle()
    lit = rasterize(V, F, INTR, IDENT, Light(intensity=1.0))
    dark = rasterize(V, F, INTR, IDENT, Light(intensity=0.0), background=(10, 20, 30))
    assert np.array_equal(lit.mask, dark.mask)
    assert np.all(dark.rgb[dark.mask == 1] == 0)
    assert np.all(dark.rgb[dark.mask == 0] == [10, 20, 30])
    assert lit.rgb[lit.mask == 1].max() > 0


def test_intensity_range():
    V, F = tilted_triangle()
    with pytest.raises(DomainError):
        rasterize(V, F, INTR, IDENT, Light(intensity=2.5))


def test_zbuffer_interpenetrating_triangles():
    # two planes crossing along a vertical line at x = 0
    A = np.array([[-80.0, -80.0, 400.0], [80.0, -80.0, 600.0], [0.0, 80.0, 500.0]])
    B = np.array([[-80.0, -80.0, 600.0], [80.0, -80.0, 400.0], [0.0, 80.0, 500.0]])
    V = np.vstack([A, B])
    F = np.array([[0, 1, 2], [3, 4, 5]])
    out = rasterize(V, F, INTR, IDENT)
    planes = []
    for T in (A, B):
        n = np.cross(T[1] - T[0], T[2] - T[0])
        planes.append((n, n @ T[0], T))
    checked = 0
    for i in range(128):
        for j in range(128):
            cands = []
            for k, (n, d, T) in enumerate(planes):
                single = rasterize(T, np.array([[0, 1, 2]]), INTR, IDENT)
                if single.mask[i, j]:
                    cands.append(plane_depth(n, d, j + 0.5, i + 0.5))
            if cands:
                assert out.mask[i, j] == 1
                assert abs(out.depth[i, j] - min(cands)) < 1e-6
                checked += 1
            else:
                assert out.mask[i, j] == 0
            if checked > 400:
                return


def test_behind_camera_renders_empty():
    V, F = tilted_triangle()
    out = rasterize(V * [1, 1, -1], F, INTR, IDENT)
    assert out.mask.sum() == 0 and np.all(out.depth == 0)


def test_render_deterministic():
    V, F = tilted_triangle()
    a, b = rasterize(V, F, INTR, IDENT), rasterize(V, F, INTR, IDENT)
    assert np.array_equal(a.rgb, b.rgb) and np.array_equal(a.depth, b.depth)


def test_hand_mask_vertex_consistency(template):
    cfg = load_config()
    intr = intrinsics_for(cfg)
    for seed in (0, 1):
        C = sample_pose(seed)
        V = skin(template, spin_match(rest_skeleton(), C)).vertices
        for view in hand_rig(C, intr, cfg).views:
            out = rasterize(V, template.faces, *view)
            frac, n_visible = mask_vertex_consistency(V, *view, out)
            assert n_visible > 100
            assert frac == 1.0
            assert np.array_equal(out.mask == 1, out.depth > 0)


def test_heatmap_examples():
    H = render_heatmaps([(10.5, 20.5), (300.0, 5.0), (-1.0, 3.0)], sigma=2.0, res=(64, 64))
    assert H.shape == (3, 64, 64)
    assert H[0, 20, 10] == 1.0
    # pixel center (12.5, 20.5) is exactly sigma away
    assert abs(H[0, 20, 12] - np.exp(-0.5)) < 1e-9
    assert np.all(H[1] == 0) and np.all(H[2] == 0)
    with pytest.raises(DomainError):
        render_heatmaps([(1, 1)], sigma=0.0)


def test_heatmap_peak_normalized_off_center():
    H = render_heatmaps([(10.2, 30.9)], sigma=1.5, res=(64, 64))
    assert H[0].max() == 1.0
    assert np.all(H >= 0)


def test_peak_exact_at_pixel_center():
    H = render_heatmaps([(33.5, 17.5)], res=(64, 64))
    p = extract_peak(H[0])
    assert p.found and (p.u, p.v, p.confidence) == (33.5, 17.5, 1.0)


def test_peak_subpixel():
    rng = np.random.default_rng(8)
    for _ in range(50):
        u, v = rng.integers(5, 59, 2) + 0.5 + np.array([0.3, 0.4])
        p = extract_peak(render_heatmaps([(u, v)], sigma=2.0, res=(64, 64))[0])
        assert abs(p.u - u) < 0.05 and abs(p.v - v) < 0.05


def test_peak_empty_and_ties():
    p = extract_peak(np.zeros((8, 8)))
    assert not p.found and p.confidence == 0.0
    h = np.zeros((8, 8))
    h[2, 5] = h[4, 1] = 1.0
    p = extract_peak(h)
    assert (p.u, p.v) == (5.5, 2.5)
    with pytest.raises(DomainError):
        extract_peak(-np.ones((3, 3)))


def test_heatmap_round_trip_on_projected_keypoints(template):
    cfg = load_config()
    C = sample_pose(2)
    intr = intrinsics_for(cfg)
    view = hand_rig(C, intr, cfg).views[0]
    u, v, _ = project(*view, C)
    H = render_heatmaps(np.stack([u, v], 1), res=(256, 256))
    for k in range(21):
        p = extract_peak(H[k])
        assert abs(p.u - u[k]) < 0.05 and abs(p.v - v[k]) < 0.05
