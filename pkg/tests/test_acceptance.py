"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test prints an ``ACCEPT <criterion>: PASS`` line with its measured
numbers (visible with ``pytest -s`` / in the captured output of ``-rA``).

The neural criteria run against weights regenerated bit-exactly from the
committed seed (see conftest) plus the committed trainer-produced parity
reference file; nothing here imports or requires the trainer package.
"""

import struct
import time
from pathlib import Path

import numpy as np
import pytest

from pvcodec import codec, metrics, octree, pcio, rangecoder
from pvcodec.models import AdaptiveModel, UniformModel, quantize_p1
from .conftest import random_cloud, sphere_cloud

FIXTURES = Path(__file__).parent / "fixtures"
PARITY_FILE = FIXTURES / "parity_reference.pvf"

ROUNDTRIP_CLOUDS = 1000
ROUNDTRIP_BUDGET_S = 120.0
NEURAL_ROUNDTRIP_CLOUDS = 6  # small clouds: the network costs ~10 ms/symbol on CPU


def _accept(name, detail):
    print(f"ACCEPT {name}: PASS ({detail})")


def test_lossless_roundtrip_fuzz(neural_model):
    """1,000 fuzzed clouds (N <= 8, <= 4,096 points), D = N, all three models."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(0xACCE57)
    counts = {"uniform": 0, "adaptive": 0, "neural": 0}
    symbols = 0
    for i in range(ROUNDTRIP_CLOUDS):
        if i < NEURAL_ROUNDTRIP_CLOUDS:
            pc = random_cloud(rng, max_points=16, max_precision=3)
            model_name = "neural"
            enc_model = dec_model = neural_model
        else:
            pc = random_cloud(rng, max_points=4096, max_precision=8)
            model_name = ("uniform", "adaptive")[i % 2]
            enc_model = UniformModel() if model_name == "uniform" else AdaptiveModel()
            dec_model = UniformModel() if model_name == "uniform" else AdaptiveModel()
        bs, report = codec.encode(pc, pc.precision, enc_model)
        out = codec.decode(bs, dec_model)
        assert np.array_equal(out.points, pc.points), f"cloud {i} ({model_name}) not lossless"
        counts[model_name] += 1
        symbols += report.symbol_count
    elapsed = time.perf_counter() - t0
    assert counts["neural"] > 0 and counts["uniform"] > 0 and counts["adaptive"] > 0
    assert elapsed < ROUNDTRIP_BUDGET_S, f"took {elapsed:.1f}s, budget {ROUNDTRIP_BUDGET_S}s"
    _accept(
        "lossless-roundtrip",
        f"{ROUNDTRIP_CLOUDS} clouds, {symbols} symbols, models {counts}, {elapsed:.1f}s",
    )


def test_lossy_bound():
    """Every input point within L-inf <= 2^(N-D) - 1 of a reconstructed point."""
    rng = np.random.default_rng(0x1055)
    checked = 0
    for _ in range(40):
        pc = random_cloud(rng, max_points=512, max_precision=7)
        if pc.precision < 2:
            continue
        for depth in range(1, pc.precision):
            bs, _ = codec.encode(pc, depth, UniformModel())
            out = codec.decode(bs, UniformModel())
            dist = np.abs(pc.points[:, None, :] - out.points[None, :, :]).max(axis=2).min(axis=1)
            bound = (1 << (pc.precision - depth)) - 1
            assert dist.max() <= bound, f"L-inf {dist.max()} > {bound} at D={depth}, N={pc.precision}"
            checked += 1
    assert checked >= 60
    _accept("lossy-bound", f"{checked} (cloud, depth) pairs")


def test_dual_replay_determinism(neural_model):
    """Instrumented encode and decode produce identical (hash, pq) logs."""
    rng = np.random.default_rng(0xD0A1)
    total = 0
    fixtures = (
        [("uniform", 20, 512, 6)] * 1 + [("adaptive", 26, 512, 6)] * 1 + [("neural", 4, 10, 3)] * 1
    )
    for model_name, n_clouds, max_points, max_precision in fixtures:
        for _ in range(n_clouds):
            pc = random_cloud(rng, max_points=max_points, max_precision=max_precision)
            if model_name == "uniform":
                enc_model, dec_model = UniformModel(), UniformModel()
            elif model_name == "adaptive":
                enc_model, dec_model = AdaptiveModel(), AdaptiveModel()
            else:
                enc_model = dec_model = neural_model
            enc_trace, dec_trace = [], []
            bs, _ = codec.encode(pc, pc.precision, enc_model, trace=enc_trace)
            codec.decode(bs, dec_model, trace=dec_trace)
            assert enc_trace == dec_trace, f"{model_name} trace diverged"
            total += 1
    assert total == 50
    _accept("dual-replay", f"50 fixtures, logs bit-identical")


def test_coder_optimality():
    """Payload bits <= ideal cross-entropy + 1% + 64 bits at each p."""
    rng = np.random.default_rng(0x0977)
    details = []
    for p in (0.5, 0.75, 0.9, 0.99):
        n = 10_000
        bits = (rng.random(n) < p).astype(int).tolist()
        pq = quantize_p1(p)
        payload = rangecoder.encode_bits(bits, [pq] * n)
        ones = sum(bits)
        ideal = -(ones * np.log2(pq / 65536) + (n - ones) * np.log2(1 - pq / 65536))
        measured = 8 * len(payload)
        assert measured <= ideal * 1.01 + 64, f"p={p}: {measured} > {ideal * 1.01 + 64:.1f}"
        assert rangecoder.decode_bits(payload, [pq] * n) == bits
        details.append(f"p={p}: {measured}b vs H={ideal:.0f}b")
    _accept("coder-optimality", "; ".join(details))


def test_context_model_lift(sphere_fixture):
    """Adaptive bpp <= 0.9 x uniform bpp on the dense-surface fixture."""
    pc = sphere_fixture
    assert len(pc) >= 50_000 and pc.precision == 9
    _, rep_u = codec.encode(pc, 9, UniformModel())
    _, rep_a = codec.encode(pc, 9, AdaptiveModel())
    ratio = rep_a.bpp / rep_u.bpp
    assert ratio <= 0.9, f"adaptive/uniform bpp ratio {ratio:.3f} > 0.9"
    _accept(
        "context-model-lift",
        f"{len(pc)} pts: uniform {rep_u.bpp:.3f} bpp, adaptive {rep_a.bpp:.3f} bpp, ratio {ratio:.3f}",
    )


def _read_parity_fixtures(path):
    data = path.read_bytes()
    magic, version, arch_id, k, whash, count = struct.unpack_from("<4sIIIQI", data, 0)
    assert magic == b"PVF1", f"bad parity fixture magic {magic!r}"
    assert version == 1
    rec = np.dtype(
        [
            ("vox", "<i1", (64,)),
            ("pc", "<f4", (k, 3)),
            ("coord", "<f4", (4,)),
            ("e_pc", "<f4", (1024,)),
            ("e_vox", "<f4", (512,)),
            ("p_head", "<f4"),
            ("p_predict", "<f4"),
        ]
    )
    off = struct.calcsize("<4sIIIQI")
    assert len(data) == off + count * rec.itemsize
    return {"arch_id": arch_id, "k": k, "weights_hash": whash, "count": count}, np.frombuffer(
        data, dtype=rec, count=count, offset=off
    )


def test_neural_parity(neural_model, fixture_weights):
    """Inference matches the trainer's reference forward pass within 1e-4."""
    if not PARITY_FILE.exists():
        pytest.fail(f"committed parity fixture missing: {PARITY_FILE}")
    meta, recs = _read_parity_fixtures(PARITY_FILE)
    assert meta["count"] >= 20
    assert meta["k"] == fixture_weights.k
    assert meta["weights_hash"] == fixture_weights.content_hash(), (
        "parity fixtures were generated for different weights"
    )
    worst = {"e_pc": 0.0, "e_vox": 0.0, "p_head": 0.0, "p_predict": 0.0}
    from pvcodec.context import HybridContext, NodeCoordinate, NodeKey, PointContext, VoxelContext

    for rec in recs:
        e_pc = neural_model.point_features(rec["pc"])
        e_vox = neural_model.voxel_features(rec["vox"].reshape(4, 4, 4))
        p_head = neural_model.head_probability(rec["e_pc"], rec["e_vox"], rec["coord"])
        ctx = HybridContext(
            vox=VoxelContext(rec["vox"].reshape(4, 4, 4)),
            pc=PointContext(rec["pc"], meta["k"]),
            coord=NodeCoordinate(rec["coord"]),
            key=NodeKey(1, (0, 0, 0)),
        )
        p_predict = neural_model.head_probability(e_pc, e_vox, rec["coord"])
        assert neural_model.predict(ctx).pq == quantize_p1(p_predict)
        worst["e_pc"] = max(worst["e_pc"], float(np.abs(e_pc - rec["e_pc"]).max()))
        worst["e_vox"] = max(worst["e_vox"], float(np.abs(e_vox - rec["e_vox"]).max()))
        worst["p_head"] = max(worst["p_head"], abs(p_head - float(rec["p_head"])))
        worst["p_predict"] = max(worst["p_predict"], abs(p_predict - float(rec["p_predict"])))
    for name, err in worst.items():
        assert err <= 1e-4, f"{name} parity error {err:.2e} > 1e-4"
    _accept(
        "neural-parity",
        f"{meta['count']} fixtures, max abs err "
        + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()),
    )


def test_ablation_wiring(neural_model):
    """Disabled branches are provably dead: predictions ignore their context."""
    from .test_models import make_ctx

    rng = np.random.default_rng(0xAB1A)
    voxel_only = codec.ablation_variant(neural_model, "voxel-only")
    point_only = codec.ablation_variant(neural_model, "point-only")
    hybrid = codec.ablation_variant(neural_model, "hybrid")
    checked = 0
    for _ in range(10):
        ctx = make_ctx(rng)
        assert hybrid.predict(ctx).pq == neural_model.predict(ctx).pq
        # voxel-only: perturb only the point context, prediction must not move
        base_v = voxel_only.predict(ctx).pq
        for _ in range(3):
            ctx.pc.neighbors = rng.uniform(-4, 4, ctx.pc.neighbors.shape).astype(np.float32)
            assert voxel_only.predict(ctx).pq == base_v
            checked += 1
        # point-only: perturb only the voxel window
        base_p = point_only.predict(ctx).pq
        for _ in range(3):
            ctx.vox.grid = rng.integers(-1, 2, (4, 4, 4)).astype(np.int8)
            assert point_only.predict(ctx).pq == base_p
            checked += 1
    _accept("ablation-wiring", f"{checked} perturbations ignored as required")


def test_metrics_oracles():
    """D1/D2/CD equal O(n^2) oracles: CD exact, PSNR to 1e-9 relative."""
    from .test_metrics import chamfer_oracle, d1_oracle, nn_sq_oracle

    rng = np.random.default_rng(0x3E71)
    pairs = 0
    for _ in range(20):
        bits = int(rng.integers(4, 8))
        hi = 1 << bits
        a = pcio.PointCloud(np.unique(rng.integers(0, hi, (int(rng.integers(10, 501)), 3)), axis=0), bits)
        b = pcio.PointCloud(np.unique(rng.integers(0, hi, (int(rng.integers(10, 501)), 3)), axis=0), bits)
        assert metrics.chamfer(a, b) == chamfer_oracle(a.points, b.points)
        assert metrics.chamfer(a, b) == metrics.chamfer(b, a)
        got = metrics.d1_psnr(a, b)
        want = d1_oracle(a.points, b.points, hi - 1)
        assert got == pytest.approx(want, rel=1e-9)
        # D2 oracle: exhaustive NN + the same normal estimator
        for ref, other in ((a, b), (b, a)):
            d2_got, fb = metrics.d2_psnr(ref, other)
            assert not fb
            normals_r, _ = metrics.estimate_normals(ref.points)
            normals_o, _ = metrics.estimate_normals(other.points)
            mses = []
            for r, o, nrm in ((ref, other, normals_r), (other, ref, normals_o)):
                d = ((r.points[:, None, :] - o.points[None, :, :]) ** 2).sum(axis=2)
                idx = d.argmin(axis=1)
                disp = (o.points[idx] - r.points).astype(np.float64)
                proj = (disp * nrm).sum(axis=1)
                mses.append((proj**2).mean())
            want_d2 = 10 * np.log10(3 * (hi - 1) ** 2 / max(mses)) if max(mses) else float("inf")
            assert d2_got == pytest.approx(want_d2, rel=1e-9)
        assert metrics.d1_psnr(a, a) == float("inf")
        pairs += 1
    _accept("metrics-oracles", f"{pairs} cloud pairs vs exhaustive oracles")


def test_depth_sweep_monotonicity(sphere_fixture):
    """On the sphere fixture, D1 PSNR and bpp are both non-decreasing in D."""
    pc = sphere_fixture
    rows = []
    for depth in range(5, 10):
        _, rep_a = codec.encode(pc, depth, AdaptiveModel())
        bs_u, _ = codec.encode(pc, depth, UniformModel())
        recon = codec.decode(bs_u, UniformModel())
        rows.append((depth, rep_a.bpp, metrics.d1_psnr(pc, recon)))
    for (d0, bpp0, psnr0), (d1, bpp1, psnr1) in zip(rows, rows[1:]):
        assert bpp1 >= bpp0, f"bpp fell from {bpp0:.3f} (D={d0}) to {bpp1:.3f} (D={d1})"
        assert psnr1 >= psnr0, f"D1 fell from {psnr0:.2f} (D={d0}) to {psnr1:.2f} (D={d1})"
    detail = "; ".join(f"D={d}: {b:.3f} bpp, {p:.1f} dB" for d, b, p in rows)
    _accept("depth-sweep", detail)
