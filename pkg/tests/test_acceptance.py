"""Acceptance gate: ten criteria, each one test, each printing one line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
PASS lines; any assertion failure marks that criterion as failed.
"""

import hashlib
import math
from dataclasses import replace

import numpy as np
import pytest
import torch

from conftest import tiny_train_config
from rdcfa import memory_bank as mb
from rdcfa.discriminator import (
    ClassMeans,
    dissimilarity_matrix,
    kld_loss,
    repulsive_loss,
)
from rdcfa.evaluator import ablation_csv, ablation_table, auroc, evaluate
from rdcfa.losses import attract_loss, hypersphere_losses, repel_loss, total_loss
from rdcfa.memory_bank import MemoryBank
from rdcfa.trainer import (
    build_model,
    derived_seeds,
    save_checkpoint,
    train,
    train_epoch,
)

TOL = 1e-6


def _report(number: int, name: str) -> None:
    print(f"[criterion {number:02d}] {name}: PASS")


def _class_means(values, rho=10.0):
    cm = ClassMeans(len(values), len(values[0]), rho=rho, seed=0)
    with torch.no_grad():
        cm.means.copy_(torch.tensor(values, dtype=cm.means.dtype))
    return cm


# ---------------------------------------------------------------------------
# 1. loss exactness
# ---------------------------------------------------------------------------


@torch.no_grad()
def test_criterion_01_loss_exactness():
    f64 = torch.float64

    # zero cases: each component vanishes at its minimum / inactive hinge
    bank = MemoryBank(entries=torch.tensor([[0.0, 0.0], [2.0, 2.0]], dtype=f64), augmented=False)
    assert float(attract_loss(bank.entries.clone(), bank, k=1, r_sq=1.0)) == pytest.approx(0.0, abs=TOL)
    assert float(
        repel_loss(torch.zeros(1, 2, dtype=f64),
                   MemoryBank(entries=torch.tensor([[0.0, 0.0], [10.0, 10.0]], dtype=f64), augmented=False),
                   k=1, j=1, r_sq=1.0, alpha=0.5)
    ) == pytest.approx(0.0, abs=TOL)
    cm = _class_means([[0.3, -0.7]])
    mu = cm.means.detach().reshape(1, 2, 1, 1).clone()
    assert float(kld_loss(mu, torch.zeros(1, 2, 1, 1), torch.tensor([0]), cm)) == pytest.approx(0.0, abs=TOL)
    cm = _class_means([[0.0, 0.0], [3.0, 4.0]])  # squared anchor distance 25 > rho
    assert float(repulsive_loss(cm, torch.tensor([0, 1]), torch.ones(2, 2), rho=10.0)) == pytest.approx(0.0, abs=TOL)
    z = torch.tensor(0.0, dtype=f64)
    assert float(total_loss(z, z, z, z, 0.5, 0.1)) == pytest.approx(0.0, abs=TOL)

    # hand-computed values
    bank = MemoryBank(entries=torch.tensor([[3.0, 4.0], [100.0, 100.0]], dtype=f64), augmented=False)
    assert float(attract_loss(torch.zeros(1, 2, dtype=f64), bank, k=1, r_sq=1.0)) == pytest.approx(24.0, abs=TOL)

    bank = MemoryBank(entries=torch.tensor([[0.0, 0.0], [0.5, 0.0]], dtype=f64), augmented=False)
    assert float(
        repel_loss(torch.zeros(1, 2, dtype=f64), bank, k=1, j=1, r_sq=1.0, alpha=0.5)
    ) == pytest.approx(0.25, abs=TOL)

    cm = _class_means([[0.0]])
    assert float(
        kld_loss(torch.ones(1, 1, 1, 1), torch.zeros(1, 1, 1, 1), torch.tensor([0]), cm)
    ) == pytest.approx(1.0, abs=TOL)
    assert float(
        kld_loss(
            torch.ones(1, 1, 1, 1),
            torch.full((1, 1, 1, 1), math.log(2.0)),
            torch.tensor([0]),
            cm,
        )
    ) == pytest.approx(2 - math.log(2), abs=TOL)

    cm = _class_means([[0.0], [2.0]])  # 2 ordered pairs of max(0, 10-4)^2 / 10
    assert float(
        repulsive_loss(cm, torch.tensor([0, 1]), torch.ones(2, 2), rho=10.0)
    ) == pytest.approx(7.2, abs=TOL)

    assert float(
        total_loss(
            torch.tensor(3.0, dtype=f64), torch.tensor(4.0, dtype=f64),
            torch.tensor(1.0, dtype=f64), torch.tensor(2.0, dtype=f64),
            alpha_kl=0.5, alpha_dr=0.1,
        )
    ) == pytest.approx(7.7, abs=TOL)
    _report(1, "loss exactness")


# ---------------------------------------------------------------------------
# 2. gradient correctness
# ---------------------------------------------------------------------------

FD_EPS = 1e-5
GRAD_REL_TOL = 1e-4


def _fd_gradient(fn, x):
    grad = torch.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.numel()):
        orig = float(flat[i])
        flat[i] = orig + FD_EPS
        up = float(fn())
        flat[i] = orig - FD_EPS
        down = float(fn())
        flat[i] = orig
        gflat[i] = (up - down) / (2 * FD_EPS)
    return grad


def _grad_ok(analytic, numeric):
    denom = max(float(numeric.abs().max()), 1e-8)
    rel = float((analytic - numeric).abs().max()) / denom
    assert rel < GRAD_REL_TOL, f"relative gradient error {rel:.2e}"


def test_criterion_02_gradient_correctness():
    checked = {"attract": 0, "repel": 0, "kld": 0, "repulsive": 0}
    seed = 0
    while min(checked.values()) < 20 and seed < 500:
        gen = torch.Generator().manual_seed(seed)
        seed += 1
        t = int(torch.randint(1, 5, (1,), generator=gen))
        d = int(torch.randint(2, 9, (1,), generator=gen))
        b = int(torch.randint(5, 10, (1,), generator=gen))

        # attract: skip instances on a hinge boundary
        bank = MemoryBank(entries=torch.randn(b, d, generator=gen, dtype=torch.float64), augmented=False)
        targets = (2 * torch.randn(t, d, generator=gen, dtype=torch.float64)).requires_grad_()
        r_sq = 0.05
        dists = ((targets.detach()[:, None, :] - bank.entries[None]) ** 2).sum(-1)
        near = dists.sort(dim=1).values[:, :2]
        if bool(((near - r_sq).abs() > 1e-3).all()):
            attract_loss(targets, bank, k=2, r_sq=r_sq).backward()
            _grad_ok(
                targets.grad,
                _fd_gradient(lambda: attract_loss(targets.detach(), bank, k=2, r_sq=r_sq), targets.detach()),
            )
            checked["attract"] += 1

        # repel
        bank = MemoryBank(entries=0.2 * torch.randn(b, d, generator=gen, dtype=torch.float64), augmented=False)
        targets = (0.2 * torch.randn(t, d, generator=gen, dtype=torch.float64)).requires_grad_()
        k, j, r_sq, alpha = 1, 2, 0.5, 0.01
        dists = ((targets.detach()[:, None, :] - bank.entries[None]) ** 2).sum(-1)
        ranked = dists.sort(dim=1).values[:, k : k + j]
        if bool(((r_sq - ranked - alpha).abs() > 1e-3).all()):
            repel_loss(targets, bank, k=k, j=j, r_sq=r_sq, alpha=alpha).backward()
            _grad_ok(
                targets.grad,
                _fd_gradient(
                    lambda: repel_loss(targets.detach(), bank, k=k, j=j, r_sq=r_sq, alpha=alpha),
                    targets.detach(),
                ),
            )
            checked["repel"] += 1

        # kld (smooth everywhere)
        n_c = int(torch.randint(1, 4, (1,), generator=gen))
        m = int(torch.randint(1, 5, (1,), generator=gen))
        cm = ClassMeans(n_c, m, rho=10.0, seed=seed)
        cm.means.data = cm.means.data.double()
        mu = torch.randn(2, m, 2, 2, generator=gen, dtype=torch.float64, requires_grad=True)
        log_var = torch.randn(2, m, 2, 2, generator=gen, dtype=torch.float64, requires_grad=True)
        labels = torch.randint(0, n_c, (2,), generator=gen)
        kld_loss(mu, log_var, labels, cm).backward()
        for tensor, analytic in ((mu, mu.grad), (log_var, log_var.grad), (cm.means, cm.means.grad)):
            with torch.no_grad():
                numeric = _fd_gradient(
                    lambda: kld_loss(mu.detach(), log_var.detach(), labels, cm), tensor.detach()
                )
            _grad_ok(analytic, numeric)
        checked["kld"] += 1

        # repulsive
        n_c = int(torch.randint(2, 4, (1,), generator=gen))
        n = int(torch.randint(2, 5, (1,), generator=gen))
        cm = ClassMeans(n_c, m, rho=10.0, seed=seed)
        cm.means.data = cm.means.data.double()
        labels = torch.randint(0, n_c, (n,), generator=gen)
        dm = torch.rand(n, n, generator=gen, dtype=torch.float64)
        dm = (dm + dm.T) / 2
        anchors = cm.means.detach()[labels]
        sq = ((anchors[:, None] - anchors[None]) ** 2).sum(-1)
        cross = (labels[:, None] != labels[None, :])
        if bool(((dm * (10.0 - sq))[cross].abs() > 1e-2).all()):
            repulsive_loss(cm, labels, dm, 10.0).backward()
            with torch.no_grad():
                numeric = _fd_gradient(lambda: repulsive_loss(cm, labels, dm, 10.0), cm.means.detach())
            _grad_ok(cm.means.grad, numeric)
            checked["repulsive"] += 1

    assert min(checked.values()) >= 20, f"too few valid instances: {checked}"
    _report(2, "gradient correctness")


# ---------------------------------------------------------------------------
# 3. nearest-neighbor oracle
# ---------------------------------------------------------------------------


def test_criterion_03_nearest_neighbor_oracle():
    gen = torch.Generator().manual_seed(7)
    for _ in range(1000):
        b = int(torch.randint(1, 257, (1,), generator=gen))
        e = int(torch.randint(1, 8, (1,), generator=gen))
        entries = torch.randn(b, e, generator=gen)
        if b > 4:  # inject exact ties
            entries[3] = entries[1]
        bank = MemoryBank(entries=entries, augmented=False)
        query = torch.randn(e, generator=gen)
        n = int(torch.randint(1, b + 1, (1,), generator=gen))
        res = mb.nearest(bank, query, n)
        dist = ((entries - query) ** 2).sum(dim=1).numpy()
        order = np.argsort(dist, kind="stable")[:n]
        assert res.indices.tolist() == order.tolist()
        np.testing.assert_array_equal(res.distances.numpy(), dist[order])
    _report(3, "nearest-neighbor oracle")


# ---------------------------------------------------------------------------
# 4. AUROC oracle
# ---------------------------------------------------------------------------


def _auroc_pairs(scores, labels):
    scores = np.asarray(scores, dtype=float)
    pos = scores[np.asarray(labels) == 1]
    neg = scores[np.asarray(labels) == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else (0.5 if p == n else 0.0)
    return total / (len(pos) * len(neg))


def test_criterion_04_auroc_oracle():
    assert auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75, abs=1e-9)
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(2, 201))
        scores = rng.choice([0.0, 0.25, 0.5, 1.0, 2.0, 3.5], size=n)
        labels = rng.integers(0, 2, size=n)
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        assert auroc(scores, labels) == pytest.approx(_auroc_pairs(scores, labels), abs=1e-9)
    _report(4, "AUROC oracle")


# ---------------------------------------------------------------------------
# 5. dissimilarity matrix
# ---------------------------------------------------------------------------


def test_criterion_05_dissimilarity_matrix():
    gen = torch.Generator().manual_seed(13)
    for _ in range(100):
        n = int(torch.randint(2, 6, (1,), generator=gen))
        mu = torch.randn(n, 3, 2, 2, generator=gen)
        dm = dissimilarity_matrix(mu)
        torch.testing.assert_close(dm, dm.T)
        assert dm.min() >= 0 and dm.max() <= 1
        assert float(dm.min()) == pytest.approx(0.0, abs=TOL)
        assert float(dm.max()) == pytest.approx(1.0, abs=TOL)

    hand = dissimilarity_matrix(torch.tensor([0.0, 2.0]).reshape(2, 1, 1, 1))
    torch.testing.assert_close(hand, torch.tensor([[0.0, 1.0], [1.0, 0.0]]))
    degenerate = dissimilarity_matrix(torch.full((3, 2, 2, 2), 0.5))
    assert torch.all(degenerate == 1)
    _report(5, "dissimilarity matrix")


# ---------------------------------------------------------------------------
# 6. reduction consistency
# ---------------------------------------------------------------------------


def test_criterion_06_reduction_consistency(dataset):
    config = tiny_train_config(
        epochs=1,
        augment_bank=False,
        refresh_bank=False,
        use_dissimilarity=False,
        cfa=replace(tiny_train_config().cfa, alpha_kl=0.0, alpha_dr=0.0),
    )
    torch.manual_seed(config.seed)
    model = build_model(config, dataset.n_classes)
    bank = mb.initialize(dataset, model)
    patch = torch.stack(
        [
            model.patch_features(dataset.load_image(s).unsqueeze(0)).squeeze(0)
            for s in dataset.train_samples[:4]
        ]
    )
    labels = torch.tensor([s.label for s in dataset.train_samples[:4]])

    with torch.no_grad():
        phi, _, _ = model(patch)
        flat = phi.permute(0, 2, 3, 1).reshape(-1, phi.shape[1])
        att, rep = hypersphere_losses(flat, bank, config.cfa)
        expected = float(att + rep)

    optimizer = torch.optim.AdamW(model.trainable_parameters(), lr=0.0)
    records = train_epoch(model, bank, [(patch, labels)], config, optimizer, config.cfa)
    assert records[0].total == pytest.approx(expected, abs=TOL)
    _report(6, "reduction consistency")


# ---------------------------------------------------------------------------
# 7. end-to-end synthetic pipeline
# ---------------------------------------------------------------------------


def test_criterion_07_end_to_end_synthetic(dataset):
    import time

    start = time.monotonic()
    detection, localization = [], []
    for seed in derived_seeds(0, 3):
        model, bank, _ = train(tiny_train_config(seed=seed, epochs=10), dataset)
        table = evaluate(model, bank, dataset, sigma=4.0)
        total = table.averages[-1]
        detection.append(total.detection)
        localization.append(total.localization)
    elapsed = time.monotonic() - start
    mean_det = float(np.mean(detection))
    mean_loc = float(np.mean(localization))
    assert mean_det >= 0.85, f"mean image AUROC {mean_det:.3f}"
    assert mean_loc >= 0.85, f"mean pixel AUROC {mean_loc:.3f}"
    assert elapsed < 600, f"pipeline took {elapsed:.0f}s"
    _report(7, f"end-to-end synthetic pipeline (det {mean_det:.3f}, loc {mean_loc:.3f})")


# ---------------------------------------------------------------------------
# 8. ablation direction
# ---------------------------------------------------------------------------


def test_criterion_08_ablation_direction(dataset, tmp_path):
    base = tiny_train_config(epochs=5)
    flags = ablation_table(dataset, base, grid="flags", n_runs=3)
    assert len(flags) == 4
    none_row = next(r for r in flags if not any(r.flags.values()))
    both_row = next(r for r in flags if all(r.flags.values()))
    assert both_row.detection >= none_row.detection

    ablation_csv(flags, tmp_path / "flags.csv")
    lines = (tmp_path / "flags.csv").read_text().splitlines()
    assert len(lines) == 5
    assert lines[0].split(",")[:2] == ["augment_bank", "refresh_bank"]

    dis = ablation_table(dataset, base, grid="dissimilarity", n_runs=3)
    ablation_csv(dis, tmp_path / "dissimilarity.csv")
    lines = (tmp_path / "dissimilarity.csv").read_text().splitlines()
    assert len(lines) == 3
    assert lines[0].split(",")[0] == "use_dissimilarity"
    _report(
        8,
        f"ablation direction (none {none_row.detection:.3f} <= both {both_row.detection:.3f})",
    )


# ---------------------------------------------------------------------------
# 9. determinism
# ---------------------------------------------------------------------------


def test_criterion_09_determinism(dataset, tmp_path):
    digests, tables = [], []
    for name in ("a", "b"):
        run_dir = tmp_path / name
        run_dir.mkdir()
        config = tiny_train_config(seed=4, epochs=3)
        model, bank, _ = train(config, dataset)
        save_checkpoint(run_dir / "model.pt", model, bank, config, dataset.class_names)
        digests.append(hashlib.sha256((run_dir / "model.pt").read_bytes()).hexdigest())
        tables.append(evaluate(model, bank, dataset, sigma=4.0))
    assert digests[0] == digests[1]
    for r_a, r_b in zip(tables[0].classes + tables[0].averages, tables[1].classes + tables[1].averages):
        assert r_a == r_b
    _report(9, "determinism")


# ---------------------------------------------------------------------------
# 10. bank semantics
# ---------------------------------------------------------------------------


def test_criterion_10_bank_semantics(dataset):
    config = tiny_train_config(epochs=3)
    model, bank, report = train(config, dataset)
    assert bank.epoch_stamp == config.epochs
    assert report.final_epoch_stamp == config.epochs

    # idempotence under unchanged parameters
    refreshed = mb.refresh(bank, dataset, model)
    torch.testing.assert_close(refreshed.entries, bank.entries)
    assert refreshed.epoch_stamp == bank.epoch_stamp + 1

    # brute-force per-class per-location averaging oracle (float64)
    sums, counts = {}, {}
    for sample in dataset.train_samples:
        feat = model.bank_feature_map(dataset.load_image(sample)).numpy().astype(np.float64)
        sums.setdefault(sample.label, np.zeros_like(feat))
        sums[sample.label] += feat
        counts[sample.label] = counts.get(sample.label, 0) + 1
    rows = []
    for label in range(dataset.n_classes):
        avg = sums[label] / counts[label]
        _, h, w = avg.shape
        for t in range(h * w):
            rows.append(avg[:, t // w, t % w])
    oracle = np.stack(rows)
    err = np.abs(bank.entries.numpy().astype(np.float64) - oracle).max()
    assert err < TOL, f"bank averaging error {err:.2e}"
    _report(10, "bank semantics")
