import struct
import time

import numpy as np
import pytest

from robusttc.flowio import split_dataset, synth_dataset
from robusttc.presets import flat_preset
from robusttc.tensornn import ArchSpec, BlockSpec, PoolSpec, TrainConfig, build, train

# Seeded desk-scale benchmark shared by the attack, fine-tuning and
# acceptance tests: 4 classes x 2000 flows, flat encoding.
BENCH_SEED = 0
BENCH_TRAIN = TrainConfig(max_epochs=30, batch_size=128, seed=BENCH_SEED)

# wall time spent building the shared benchmark fixtures, by stage
BENCH_SECONDS: dict[str, float] = {}

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None and rep.when == "call":
        _ACCEPTANCE.append((marker.args[0], marker.args[1], rep.passed, rep.duration))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, duration in sorted(_ACCEPTANCE):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {title} ({duration:.1f}s)")


# -- packet fixtures ---------------------------------------------------------

def ipv4(payload_len, proto=6, src=(192, 168, 1, 2), dst=(10, 0, 0, 9), sport=1234, dport=80,
         ihl=5, tcp_words=5, payload=None):
    """IPv4 + TCP/UDP bytes with the given header sizes."""
    thl = tcp_words * 4 if proto == 6 else 8
    total = ihl * 4 + thl + payload_len
    ip = struct.pack("!BBHHHBBH4s4s", 0x40 | ihl, 0, total, 1, 0x4000, 64, proto, 0,
                     bytes(src), bytes(dst)) + bytes(ihl * 4 - 20)
    if proto == 6:
        tr = struct.pack("!HHIIBBHHH", sport, dport, 1, 0, tcp_words << 4, 0x18, 512, 0, 0)
        tr += bytes(thl - 20)
    else:
        tr = struct.pack("!HHHH", sport, dport, 8 + payload_len, 0)
    body = bytes(range(1, payload_len + 1)) if payload is None else payload
    return ip + tr + body


def ether(l3, ethertype=0x0800):
    return bytes.fromhex("020000000001") + bytes.fromhex("020000000002") + struct.pack("!H", ethertype) + l3


ARP = ether(bytes(28), ethertype=0x0806)


@pytest.fixture
def frame():
    return lambda *a, **k: ether(ipv4(*a, **k))


# -- architecture fixtures ----------------------------------------------------

def random_small_spec(rng, max_blocks=3, length=None, channels=None, classes=None):
    """A random valid spec on a short input, for gradient and oracle checks."""
    while True:
        L = length or int(rng.integers(8, 24))
        C = channels or int(rng.integers(1, 4))
        blocks = []
        for _ in range(int(rng.integers(1, max_blocks + 1))):
            pool = None
            if rng.random() < 0.5:
                pool = PoolSpec(["max", "avg"][int(rng.integers(2))], int(rng.integers(2, 4)))
            blocks.append(BlockSpec(int(rng.integers(1, 5)), int(rng.integers(1, 5)),
                                    int(rng.integers(1, 4)), ["valid", "same"][int(rng.integers(2))],
                                    pool, 0.0))
        spec = ArchSpec(tuple(blocks), classes or int(rng.integers(2, 5)), (L, C))
        try:
            build(spec, 0)
            return spec
        except Exception:
            continue


def perturb_bn(model, rng):
    """Move BN parameters away from identity so their gradients are exercised."""
    for name, p in model.params.items():
        if name.endswith(("gamma", "beta")):
            p += rng.normal(0, 0.3, p.shape).astype(p.dtype)
        elif name.endswith("moving_mean"):
            p += rng.normal(0, 0.2, p.shape).astype(p.dtype)
        elif name.endswith("moving_var"):
            p[...] = rng.uniform(0.5, 2.0, p.shape)
    return model


# -- shared benchmark ---------------------------------------------------------

class Bench:
    pass


@pytest.fixture(scope="session")
def bench_data():
    t0 = time.perf_counter()
    ds = split_dataset(synth_dataset(4, 2000, "flat", seed=BENCH_SEED), 0.2, 0.2, seed=BENCH_SEED)
    BENCH_SECONDS["data"] = time.perf_counter() - t0
    return ds


@pytest.fixture(scope="session")
def bench_model(bench_data):
    t0 = time.perf_counter()
    model, hist = train(build(flat_preset(4), BENCH_SEED), bench_data, BENCH_TRAIN)
    BENCH_SECONDS["train"] = time.perf_counter() - t0
    return model, hist


@pytest.fixture(scope="session")
def bench(bench_data, bench_model):
    from robusttc.advtrain import AdvTrainConfig, finetune
    from robusttc.attacks import sweep

    t0 = time.perf_counter()
    b = Bench()
    b.data = bench_data
    b.model, b.history = bench_model
    b.before = sweep(b.model, bench_data, model_name="flat")
    b.ft_cfg = AdvTrainConfig(epochs=20, fgsm_eps=0.1, adv_fraction=0.5, lr=0.0004,
                              batch_size=128, seed=BENCH_SEED)
    b.tuned, b.ft_history = finetune(b.model.copy(), bench_data, b.ft_cfg)
    b.after = sweep(b.tuned, bench_data, model_name="flat")
    BENCH_SECONDS["attack_finetune"] = time.perf_counter() - t0
    b.seconds = BENCH_SECONDS
    return b


# -- independent oracles --------------------------------------------------------

def rel_err(a, n):
    """Per-tensor max abs difference scaled by the larger magnitude (floored)."""
    a, n = np.asarray(a, float), np.asarray(n, float)
    scale = max(np.abs(a).max(initial=0), np.abs(n).max(initial=0), 1e-5)
    return float(np.abs(a - n).max(initial=0) / scale)


def numeric_grad(f, x, h=1e-6):
    """Central differences of scalar ``f`` with respect to array ``x`` (in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def naive_forward(model, x):
    """Eval-mode logits with explicit loops; shares no code with the engine."""
    p = model.params
    out = []
    for sample in np.asarray(x, float):
        h = sample
        for i, b in enumerate(model.spec.blocks):
            L, cin = h.shape
            k, s = b.kernel, b.stride
            if b.padding == "same":
                n_out = -(-L // s)
                total = max((n_out - 1) * s + k - L, 0)
                h = np.vstack([np.zeros((total // 2, cin)), h, np.zeros((total - total // 2, cin))])
            else:
                n_out = (L - k) // s + 1
            W, bias = p[f"block{i}.conv.kernel"], p[f"block{i}.conv.bias"]
            y = np.zeros((n_out, b.filters))
            for t in range(n_out):
                for f in range(b.filters):
                    acc = bias[f]
                    for j in range(k):
                        for c in range(cin):
                            acc += h[t * s + j, c] * W[j, c, f]
                    y[t, f] = acc
            g, be = p[f"block{i}.bn.gamma"], p[f"block{i}.bn.beta"]
            mm, mv = p[f"block{i}.bn.moving_mean"], p[f"block{i}.bn.moving_var"]
            y = g * (y - mm) / np.sqrt(mv + 1e-3) + be
            y = np.maximum(y, 0)
            if b.pool is not None:
                size = b.pool.size
                rows = []
                for t in range(0, len(y), size):
                    win = y[t:t + size]
                    rows.append(win.max(axis=0) if b.pool.kind == "max" else win.sum(axis=0) / len(win))
                y = np.array(rows)
            h = y
        v = h.mean(axis=0)
        out.append(v @ p["dense.kernel"] + p["dense.bias"])
    return np.array(out)


def gradient_errors(spec, seed, batch=3):
    """Worst relative error of analytic vs. finite-difference gradients.

    Weight gradients use the train-mode loss (batch statistics, no dropout);
    the input gradient uses the eval-mode loss.
    """
    from robusttc.tensornn import build, input_gradient, loss, loss_and_grads

    rng = np.random.default_rng(seed)
    model = perturb_bn(build(spec, seed, dtype=np.float64), rng)
    x = rng.random((batch, *spec.input_shape))
    y = rng.integers(0, spec.num_classes, batch)
    _, grads = loss_and_grads(model, x, y)
    errs = {}
    for name in model.trainable_names:
        num = numeric_grad(lambda: loss(model, x, y, mode="train"), model.params[name])
        errs[name] = rel_err(grads[name], num)
    num = numeric_grad(lambda: loss(model, x, y, mode="eval"), x)
    errs["input"] = rel_err(input_gradient(model, x, y), num)
    return errs


def attack_fuzz_case(rng):
    """One randomized (model, batch, eps, mask) attack check; raises on violation."""
    from robusttc.attacks import AttackConfig, fgsm, pgd

    spec = random_small_spec(rng, max_blocks=2)
    model = perturb_bn(build(spec, int(rng.integers(1 << 30))), rng)
    n = int(rng.integers(1, 6))
    x = rng.random((n, *spec.input_shape)).astype(np.float32)
    x[rng.random(x.shape) < 0.1] = 0.0
    x[rng.random(x.shape) < 0.1] = 1.0
    mask = (rng.random(x.shape) < rng.random()).astype(np.uint8)
    y = rng.integers(0, spec.num_classes, n)
    eps = float(rng.choice([0.0, rng.uniform(0, 0.3), 0.01, 0.2]))
    cfg = AttackConfig("PGD", eps, None, int(rng.integers(1, 6)))
    adv_f = fgsm(model, x, y, eps, mask)
    adv_p = pgd(model, x, y, cfg, mask)
    # float32 rounding of x + eps can overshoot by one ulp of a value in [0, 1]
    tol = eps + 2.0 ** -23
    outside = mask == 0
    for adv in (adv_f, adv_p):
        assert adv.shape == x.shape and adv.dtype == np.float32
        assert np.abs(adv - x).max(initial=0) <= tol
        assert adv.min(initial=0) >= 0 and adv.max(initial=1) <= 1
        np.testing.assert_array_equal(adv[outside], x[outside])
    if eps == 0:
        np.testing.assert_array_equal(adv_f, x)
        np.testing.assert_array_equal(adv_p, x)
    one = pgd(model, x, y, AttackConfig("PGD", eps, eps, 1), mask)
    np.testing.assert_array_equal(one, adv_f)
