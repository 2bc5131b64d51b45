import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loadpipe.interp import (
    BINARY_OPS,
    UNARY_OPS,
    ExecMode,
    InterpError,
    OutOfBoundsError,
    PipelineFault,
    StaleReadError,
    check_equivalence,
    compare_outputs,
    op_function,
    random_inputs,
    run,
)
from loadpipe.ir import parse_program, print_program
from loadpipe.pipeline import transform
from loadpipe.scheduler import lower, parse_script
from loadpipe.workloads import gemm_script, golden_case

SINGLE = """workload gemm M=4 N=4 K=8
cache_read A shared
tile C i=2,2 j=2,2 k=4,2
pipeline A_shared 3
"""


@pytest.fixture(scope="module")
def single():
    p = lower(parse_script(SINGLE))
    return p, transform(p)


def _mutate(p, old, new, count=1):
    text = print_program(p)
    assert old in text
    return parse_program(text.replace(old, new, count))


def test_untransformed_matches_matmul():
    p = lower(parse_script(gemm_script(4, 2, None)))
    inputs = random_inputs(p, 0)
    out = run(p, inputs).outputs["C"]
    assert (out == inputs["A"] @ inputs["B"]).all()


def test_identity_inputs():
    p = lower(parse_script(gemm_script(4, 2, None)))
    eye = np.eye(4, dtype=np.int64)
    b = np.arange(16).reshape(4, 4)
    assert (run(p, {"A": eye, "B": b}).outputs["C"] == b).all()


def test_transformed_strict_no_faults(single):
    p, q = single
    inputs = random_inputs(p, 1)
    res = run(q, inputs, ExecMode.STRICT)
    assert res.faults == 0
    assert (res.outputs["C"] == run(p, inputs).outputs["C"]).all()


def test_missing_wait_detected(single):
    p, q = single
    # drop the in-loop wait: the compute then reads a batch that is not flushed
    broken = _mutate(q, "      consumer_wait A_shared;\n", "")
    inputs = random_inputs(p, 2)
    with pytest.raises(StaleReadError):
        run(broken, inputs, ExecMode.STRICT)
    res = run(broken, inputs, ExecMode.STALE_READ)
    assert res.faults > 0
    assert not compare_outputs(run(p, inputs).outputs, res.outputs)


def test_missing_release_overflows_capacity(single):
    p, q = single
    broken = _mutate(q, "      consumer_release A_shared;\n", "")
    with pytest.raises(PipelineFault):
        run(broken, random_inputs(p, 0), ExecMode.STRICT)


def test_wrong_slot_reports_divergence(single):
    p, q = single
    broken = _mutate(q, "A_shared[ko % 3", "A_shared[(ko + 1) % 3")
    eq = check_equivalence(p, broken, random_inputs(p, 3), ExecMode.STALE_READ)
    assert not eq
    assert eq.buffer == "C" and len(eq.index) == 2
    assert "first divergence" in str(eq)


def test_reflexive():
    p = golden_case().program()
    assert check_equivalence(p, p, random_inputs(p, 0))


def test_signature_mismatch():
    a = lower(parse_script(gemm_script(4, 2, None)))
    b = lower(parse_script(gemm_script(8, 2, None)))
    with pytest.raises(InterpError):
        check_equivalence(a, b, random_inputs(a, 0))


def test_out_of_bounds():
    p = parse_program("buffer A global i32[4]; buffer C global i32[4]; for i seq 0..4 { C[i + 1] = copy(A[i]) flops 0; }")
    with pytest.raises(OutOfBoundsError):
        run(p, {"A": [1, 2, 3, 4]})


def test_unbound_and_misshapen_inputs():
    p = lower(parse_script(gemm_script(4, 2, None)))
    with pytest.raises(InterpError):
        run(p, {"A": np.zeros((4, 4))})
    with pytest.raises(InterpError):
        run(p, {"A": np.zeros(3), "B": np.zeros((4, 4))})


def test_trace_counters_consistent(single):
    p, q = single
    res = run(q, random_inputs(p, 0))
    kinds = {e.kind for e in res.trace}
    assert {"producer_acquire", "producer_commit", "consumer_wait", "consumer_release"} <= kinds
    for e in res.trace:
        assert e.released <= e.waited <= e.committed <= e.acquired
        assert e.acquired - e.released <= 3
    last = res.trace[-1]
    assert last.acquired == last.released


def test_run_is_deterministic(single):
    p, q = single
    inputs = random_inputs(p, 4)
    a, b = run(q, inputs), run(q, inputs)
    assert [e.to_dict() for e in a.trace] == [e.to_dict() for e in b.trace]
    assert (a.outputs["C"] == b.outputs["C"]).all()


def test_op_functions():
    assert op_function("add", 2)(2, 3) == 5
    assert op_function("mma", 3)(1, 2, 3) == 7
    assert op_function("mma_pre_inc", 3)(1, 2, 3) == 1 + 3 * 3
    assert op_function("relu", 1)(-3) == 0
    with pytest.raises(InterpError):
        op_function("nope", 1)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(sorted(UNARY_OPS)), st.integers(-50, 50))
def test_pre_fused_mma_matches_composition(op, x):
    f = op_function(op, 1)
    assert op_function("mma_pre_" + op, 3)(7, x, 2) == 7 + f(x) * 2


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_golden_equivalence_random_seeds(seed):
    p = golden_case().program()
    assert check_equivalence(p, transform(p), random_inputs(p, seed))


def test_binary_ops_registered():
    assert {"add", "mul"} <= set(BINARY_OPS)
