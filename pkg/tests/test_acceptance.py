"""End-to-end acceptance checks, one test per numbered criterion.

The terminal summary prints one PASS/FAIL line per criterion.
"""

import json

import pytest

from conftest import mixed_trace
from reference_gaze import ReferenceGaze
from gazesim.baselines import NAccessTablePrefetcher
from gazesim.cli import build_config, cmd_run, main
from gazesim.gaze import GazeConfig, GazePrefetcher, PredictionKind, PrefetchState, storage_report
from gazesim.memsys import Level
from gazesim.metrics import PrefetchCounters, aggregate, late_fraction, llc_coverage, overall_accuracy
from gazesim.runner import compare, simulate
from gazesim.trace import TraceSpec, generate

criterion = pytest.mark.criterion


@criterion(1, "storage budget is bit-exact at defaults")
def test_storage_budget_bit_exact():
    report = storage_report(GazeConfig())
    got = [report["tables"][t]["bytes"] for t in ("FT", "AT", "PHT", "DPCT", "PB")]
    assert got == [456, 1128, 2304, 15, 668]
    assert report["total_bytes"] == 4571
    assert report["total_kib"] == 4.46


# A and C share footprint and order; B shares only the trigger offset.
REGION_A = [5, 9, 10, 20, 21, 22, 30]
REGION_B = [5, 40, 41, 42, 50, 51, 60]


def conflict_scenario():
    """A, B, C age out of the tracking tables, then D replays B."""
    spec = TraceSpec("pattern-replay", 10_000,
                     params={"patterns": [REGION_A, REGION_B], "schedule": [0, 1, 0, 1], "fillers": 64})
    trace = generate(spec)
    d_pc = 0x400100 + 4
    d_region = [a.vaddr // 4096 for a in trace if a.pc == d_pc][-1]
    return trace, d_region


def requests_for(prefetcher, trace, region):
    out = []
    for a in trace:
        out += [(r.addr % 4096 // 64, r.level) for r in prefetcher.observe(a) if r.addr // 4096 == region]
    return out


@criterion(2, "two-access key resolves the trigger-offset conflict")
def test_conflict_resolution_by_second_offset():
    trace, d_region = conflict_scenario()
    gaze = requests_for(GazePrefetcher(), trace, d_region)
    expected_b = [(off, Level.L1D) for off in sorted(REGION_B) if off not in REGION_B[:2]]
    assert gaze == expected_b
    offset_only = requests_for(NAccessTablePrefetcher(1), trace, d_region)
    # the trigger-only table recalls the most recent pattern at offset 5: C's, not B's
    assert offset_only == [(off, Level.L1D) for off in sorted(REGION_A) if off != REGION_A[0]]
    assert {o for o, _ in offset_only} != set(REGION_B) - {REGION_B[0]}


@criterion(3, "longer keys trade coverage for accuracy (N = 1..4, 10 seeds)")
def test_n_access_sweep_is_monotone():
    pooled = {n: [] for n in range(1, 5)}
    for seed in range(10):
        trace = generate(TraceSpec("pattern-replay", 5000, seed=seed))
        for n in range(1, 5):
            pooled[n].append(simulate(trace, f"n-access:{n}").counters)
    acc = [overall_accuracy(aggregate(pooled[n])) for n in range(1, 5)]
    cov = [llc_coverage(aggregate(pooled[n])) for n in range(1, 5)]
    print("accuracy", [round(a, 4) for a in acc], "coverage", [round(c, 4) for c in cov])
    assert all(a <= b for a, b in zip(acc, acc[1:]))
    assert all(a >= b for a, b in zip(cov, cov[1:]))
    assert acc[1] > acc[0]


@criterion(4, "saturated streaming: 16 head blocks to L1D, the rest to L2C")
def test_streaming_stage1_split():
    g = GazePrefetcher(record=True)
    trace = generate(TraceSpec("streaming", 64 * 200))
    pb_after_activation = {}
    for a in trace:
        before = len(g.prediction_log)
        g.observe(a)
        if len(g.prediction_log) > before:
            region = g.prediction_log[-1][0]
            entry = g.pb.get(region)
            pb_after_activation[region] = None if entry is None else (list(entry.states), list(entry.issued))
    log = g.prediction_log
    first_head = next(i for i, (*_, p) in enumerate(log) if p.kind is PredictionKind.STREAMING_HEAD)
    assert g.dc.saturated
    post = log[first_head:]
    assert len(post) > 100
    for region, trigger, second, pred in post:
        assert (trigger, second) == (0, 1) and pred.kind is PredictionKind.STREAMING_HEAD
        kept = {o: s for o, s in pred.pattern.items() if o not in (trigger, second)}
        assert sum(s == PrefetchState.L1D for s in kept.values()) == 14
        assert sum(s == PrefetchState.L2C for s in kept.values()) == 48
        states, issued = pb_after_activation[region]
        # offsets 2 and 3 leave in the activating access's drain
        assert issued[2:4] == [PrefetchState.L1D] * 2
        assert states[4:16] == [PrefetchState.L1D] * 12
        assert states[16:] == [PrefetchState.L2C] * 48


class KeyAudit(GazePrefetcher):
    """Records the order of training and prediction keys."""

    def __init__(self):
        super().__init__()
        self.trained = set()
        self.violations = 0
        self.pht_predictions = 0

    def train(self, victim):
        super().train(victim)
        if self.config.pht and (victim.trigger, victim.second) != (0, 1):
            self.trained.add((victim.trigger, victim.second))

    def predict(self, trigger, second, hpc):
        pred = super().predict(trigger, second, hpc)
        if pred.kind is PredictionKind.PHT_HIT:
            self.pht_predictions += 1
            self.violations += (trigger, second) not in self.trained
        return pred


@criterion(5, "strict matching: no PHT prefetch for an untrained key (100 traces)")
def test_strict_matching():
    pht_requests = predictions = 0
    for seed in range(100):
        g = KeyAudit()
        for a in mixed_trace(1000 + seed):
            g.observe(a)
        assert g.stats["untrained_pht_hits"] == 0
        assert g.violations == 0
        pht_requests += g.requests_by_source["pht-hit"]
        predictions += g.pht_predictions
    assert pht_requests > 0 and predictions > 0


def oracle_cases():
    variants = [{}, {"streaming": False}, {"pht": False}]
    for seed in range(100):
        region_size = 4096 if seed % 2 == 0 else 1024
        yield seed, region_size, variants[seed // 2 % 3]


@criterion(6, "naive reference model emits identical request streams (100 traces)")
def test_reference_model_equivalence():
    kinds = set()
    for seed, region_size, variant in oracle_cases():
        cfg = GazeConfig(region_size=region_size, stage1_head=region_size // 64 // 4, **variant)
        main_model = GazePrefetcher(cfg, record=True)
        ref = ReferenceGaze(region_size=region_size, **variant)
        for i, a in enumerate(mixed_trace(seed, 1000, region_size)):
            got = [(r.addr, 1 if r.level is Level.L1D else 2) for r in main_model.observe(a)]
            assert got == ref.observe(a.pc, a.vaddr), f"seed {seed} access {i}"
        kinds |= {p.kind for *_, p in main_model.prediction_log}
    assert kinds == set(PredictionKind)


@criterion(7, "streaming module beats naive PHT learning on bfs-mixed accesses")
def test_ablation_ordering():
    for seed in range(3):
        trace = generate(TraceSpec("bfs-mixed", 12_000, seed=seed))
        sm_only = simulate(trace, "gaze-sm-only").accuracy
        pht_only = simulate(trace, "gaze-pht-only").accuracy
        print(f"seed {seed}: sm-only {sm_only:.4f} pht-only {pht_only:.4f}")
        assert sm_only >= pht_only


@criterion(8, "metric formulas match hand arithmetic")
def test_metric_formulas():
    assert overall_accuracy(PrefetchCounters(n_a=3, n_b=1, m_a=1, m_b=0)) == 0.8
    assert overall_accuracy(PrefetchCounters()) is None
    assert overall_accuracy(PrefetchCounters(n_b=5, m_b=5)) == 0.0
    assert llc_coverage(PrefetchCounters(llc_prefetch_hits=30, llc_demand_misses=70)) == 0.3
    assert llc_coverage(PrefetchCounters(llc_demand_misses=9)) == 0.0
    assert llc_coverage(PrefetchCounters()) is None
    assert late_fraction(PrefetchCounters(late_useful=0, timely_useful=3)) == 0.0
    assert late_fraction(PrefetchCounters(late_useful=3, timely_useful=0)) == 1.0
    assert late_fraction(PrefetchCounters(late_useful=1, timely_useful=3)) == 0.25
    # coverage on a short stream: only offsets 0..2 of each region precede a stride promotion
    trace = generate(TraceSpec("streaming", 2000))
    regions = {a.vaddr // 4096 for a in trace}
    first_touch_misses = sum(1 for a in trace if a.vaddr // 64 % 64 < 3)
    assert first_touch_misses == 3 * len(regions)
    assert simulate(trace, "gaze").coverage == 1 - first_touch_misses / len(trace)


@criterion(9, "repeated runs produce byte-identical JSON")
def test_run_is_deterministic(tmp_path, capsys):
    for kind in ("streaming", "pattern-replay", "irregular", "bfs-mixed"):
        raw = {"trace_kind": kind, "trace_length": 3000, "seed": 7, "prefetcher": "gaze"}
        assert cmd_run(build_config(raw)).to_json() == cmd_run(build_config(raw)).to_json()
    outputs = []
    for i in range(2):
        path = tmp_path / f"r{i}.json"
        assert main(["run", "--set", "trace_kind=bfs-mixed", "--set", "trace_length=2000",
                     "--set", "prefetcher=gaze-pht-only", "-o", str(path)]) == 0
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]
    json.loads(outputs[0])


# measured once on irregular seed 0, 20000 accesses, then pinned
IRREGULAR_GAZE_SPEEDUP = 1.0


@criterion(10, "speedup sanity on streaming and irregular traces")
def test_speedup_sanity():
    reports = compare(generate(TraceSpec("streaming", 20_000)), ["next-line", "gaze"])
    streaming = {r.prefetcher: r.speedup for r in reports}
    print("streaming", streaming)
    assert streaming["gaze"] > 1.0 and streaming["gaze"] >= streaming["next-line"]
    for seed in range(3):
        reports = compare(generate(TraceSpec("irregular", 20_000, seed=seed)), ["gaze"])
        sp = reports[1].speedup
        print(f"irregular seed {seed}", sp)
        assert sp >= 0.93
        if seed == 0:
            assert sp == pytest.approx(IRREGULAR_GAZE_SPEEDUP, abs=1e-4)
