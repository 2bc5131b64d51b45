import pytest

from loadpipe.config import WorkloadDesc
from loadpipe.interp import check_equivalence, random_inputs, run
from loadpipe.ir import AsyncCopy, LoopKind, Scope, walk
from loadpipe.pipeline import transform
from loadpipe.scheduler import (
    IneligibleBufferError,
    OrderingError,
    ProducerKind,
    Rule,
    ScheduleError,
    cache_read,
    check_eligibility,
    gemm_state,
    inline,
    lower,
    mark_pipeline,
    parse_script,
    stencil_state,
    tile,
    workload_of,
)


def test_cache_read_names_and_sources():
    s = cache_read(gemm_state(8, 8, 8), "A", Scope.SHARED)
    buf = s.node("A_shared")
    assert buf.kind is ProducerKind.COPY and buf.sources == ("A",)
    assert s.node("C").sources == ("A_shared", "B")


def test_cache_read_upward_rejected():
    s = cache_read(gemm_state(8, 8, 8), "A", Scope.REGISTER)
    with pytest.raises(ScheduleError):
        cache_read(s, "A_reg", Scope.SHARED)


def test_two_level_chain():
    s = cache_read(cache_read(gemm_state(8, 8, 8), "A", Scope.SHARED), "A_shared", Scope.REGISTER)
    assert s.node("A_reg").sources == ("A_shared",)
    assert s.node("C").sources[0] == "A_reg"


def test_tile_split_extents():
    s = tile(gemm_state(64, 64, 128), "C", {"k": [8, 16]})
    seq = {l.var: l.extent for l in s.sketch if l.kind is LoopKind.SEQUENTIAL}
    assert seq == {"ko": 8, "ki": 16}


def test_tile_inner_factor_form():
    s = tile(gemm_state(64, 64, 128), "C", {"k": [16]})
    assert {l.var: l.extent for l in s.sketch}["ko"] == 8


def test_tile_bad_factor():
    with pytest.raises(ScheduleError):
        tile(gemm_state(8, 8, 8), "C", {"k": [5]})


def test_parallel_output_loops_not_pipelinable():
    s = tile(gemm_state(8, 8, 8), "C", {"i": [2, 4], "j": [2, 4], "k": [4, 2]})
    assert all(l.kind is LoopKind.PARALLEL for l in s.sketch if l.axis in "ij")


# ------------------------------------------------------------ eligibility


def test_rule_not_async_producer():
    s = gemm_state(8, 8, 8, pre_op="inc")
    s = tile(cache_read(s, "S2", Scope.SHARED), "C", {"i": [2, 4], "j": [2, 4], "k": [4, 2, 1]})
    assert check_eligibility(s, "S2").failed_rule is Rule.NOT_ASYNC_PRODUCER


def test_rule_no_sequential_loop():
    s = stencil_state(8, 8)
    s = tile(cache_read(s, "X", Scope.SHARED), "Y", {"i": [2, 4], "j": [2, 4]})
    report = check_eligibility(s, "X_shared")
    assert not report.eligible and report.failed_rule is Rule.NO_SEQUENTIAL_LOOP
    with pytest.raises(IneligibleBufferError):
        mark_pipeline(s, "X_shared", 2)


def test_rule_sync_position_conflict_refuses_both():
    s = gemm_state(8, 8, 8)
    s = cache_read(s, "A", Scope.SHARED)
    s = cache_read(s, "B", Scope.SHARED, at="ki")
    s = tile(s, "C", {"i": [2, 4], "j": [2, 4], "k": [4, 2, 1]})
    s = mark_pipeline(s, "A_shared", 2)
    with pytest.raises(IneligibleBufferError) as exc:
        mark_pipeline(s, "B_shared", 2)
    assert exc.value.report.failed_rule is Rule.SYNC_POSITION_CONFLICT
    after = exc.value.state
    assert after.stages == {}
    assert after.refused == {"A_shared", "B_shared"}
    assert check_eligibility(after, "A_shared").failed_rule is Rule.SYNC_POSITION_CONFLICT


def test_same_loop_shared_buffers_ok():
    s = parse_script("workload gemm M=8 N=8 K=8\ncache_read A shared\ncache_read B shared\n"
                     "tile C i=2,4 j=2,4 k=4,2,1\npipeline A_shared 3\npipeline B_shared 3\n")
    assert s.stages == {"A_shared": 3, "B_shared": 3}


def test_mark_pipeline_records_hint():
    s = tile(cache_read(gemm_state(8, 8, 8), "A", Scope.SHARED), "C", {"k": [4, 2, 1]})
    s = mark_pipeline(s, "A_shared", 3)
    assert s.stages == {"A_shared": 3}


def test_pipeline_before_tile_is_ordering_error():
    s = cache_read(gemm_state(8, 8, 8), "A", Scope.SHARED)
    with pytest.raises(OrderingError, match="pipeline requires loop sketch"):
        mark_pipeline(s, "A_shared", 2)


def test_single_stage_rejected():
    s = tile(cache_read(gemm_state(8, 8, 8), "A", Scope.SHARED), "C", {"k": [4, 2, 1]})
    with pytest.raises(ScheduleError):
        mark_pipeline(s, "A_shared", 1)


# ----------------------------------------------------------------- inline


def _pre_state():
    s = gemm_state(8, 8, 8, pre_op="inc")
    s = cache_read(s, "S2", Scope.SHARED)
    s = cache_read(s, "B", Scope.SHARED)
    return tile(s, "C", {"i": [2, 4], "j": [2, 4], "k": [4, 2, 1]})


def test_inline_after_pipeline_keeps_buffer_async():
    s = mark_pipeline(_pre_state(), "S2_shared", 3)
    s = inline(s, "S2")
    buf = s.node("S2_shared")
    assert buf.kind is ProducerKind.COPY and buf.sources == ("A",)
    assert s.node("C").op == "mma_pre_inc"
    assert s.stages == {"S2_shared": 3}
    p = lower(s, WorkloadDesc(8, 8, 8))
    q = transform(p)
    assert check_equivalence(p, q, random_inputs(p, 3))


def test_inline_before_pipeline_breaks_rule_one():
    s = inline(_pre_state(), "S2")
    assert s.node("S2_shared").kind is ProducerKind.COMPUTE
    with pytest.raises(IneligibleBufferError) as exc:
        mark_pipeline(s, "S2_shared", 3)
    assert exc.value.report.failed_rule is Rule.NOT_ASYNC_PRODUCER


def test_inline_binary_rejected():
    with pytest.raises(ScheduleError):
        inline(gemm_state(8, 8, 8), "C")


def test_inline_semantics_preserved():
    s = _pre_state()
    base = lower(s, WorkloadDesc(8, 8, 8))
    fused = lower(inline(s, "S2"), WorkloadDesc(8, 8, 8))
    inputs = random_inputs(base, 0)
    assert (run(base, inputs).outputs["C"] == run(fused, inputs).outputs["C"]).all()


# ------------------------------------------------------------------ lower


def test_lower_golden_shape(golden_input_text):
    from loadpipe.ir import print_program
    from loadpipe.workloads import golden_case

    p = golden_case().program()
    assert p.buffer("A_shared").stages == 3
    assert p.buffer("A_reg").stages == 2
    assert print_program(p) == golden_input_text


def test_lower_without_cache_read_has_no_copies():
    s = tile(gemm_state(8, 8, 8), "C", {"i": [2, 4], "j": [2, 4], "k": [4, 2]})
    p = lower(s, WorkloadDesc(8, 8, 8))
    assert not any(isinstance(x, AsyncCopy) for _, x in walk(p.body))


def test_lower_matches_matmul():
    s = tile(cache_read(gemm_state(4, 4, 4), "A", Scope.SHARED), "C", {"k": [2, 2]})
    p = lower(s)
    inputs = random_inputs(p, 5)
    out = run(p, inputs).outputs["C"]
    assert (out == inputs["A"] @ inputs["B"]).all()


def test_lower_batched():
    s = parse_script("workload gemm M=4 N=4 K=4 batch=2\ncache_read A shared\ntile C k=2,2\npipeline A_shared 2\n")
    p = lower(s)
    assert workload_of(s).batch == 2
    inputs = random_inputs(p, 1)
    assert (run(p, inputs).outputs["C"] == inputs["A"] @ inputs["B"]).all()
    assert check_equivalence(p, transform(p), inputs)


def test_lower_shape_mismatch():
    s = tile(gemm_state(8, 8, 8), "C", {"k": [4, 2]})
    with pytest.raises(ScheduleError):
        lower(s, WorkloadDesc(16, 8, 8))


def test_script_errors_carry_line():
    with pytest.raises(ScheduleError, match="line 2"):
        parse_script("workload gemm M=8 N=8 K=8\ntile C k=3\n")
    with pytest.raises(ScheduleError):
        parse_script("")
