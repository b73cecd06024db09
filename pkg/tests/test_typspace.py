import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from locc_lab import PureState
from locc_lab.locc import LoccSession, Party
from locc_lab.protocols.common import product_state
from locc_lab.typspace import (
    BlockPartition,
    EmptyTypicalSet,
    build_codebook,
    count_window,
    lcm_of_block_sizes,
    position_partition,
    schumacher_compress,
    schumacher_decompress,
    support_set,
    typical_set,
    typical_weight,
)

ALICE = Party.ALICE


def brute_weight(p, n, delta):
    """Oracle: enumerate every string and test the frequency window directly."""
    total, found = 0.0, False
    for x in itertools.product(range(len(p)), repeat=n):
        if all(abs(x.count(s) / n - ps) <= delta + 1e-12 for s, ps in enumerate(p)):
            found = True
            total += math.prod(p[s] for s in x)
    return total if found else None


class TestTypicalSet:
    def test_balanced_pair(self):
        t = typical_set([0.5, 0.5], 2, 0)
        assert t.members == ((0, 1), (1, 0))

    def test_deterministic_source(self):
        for n in (1, 4, 7):
            assert typical_set([1.0, 0.0], n, 0).members == ((0,) * n,)

    def test_parity_obstruction(self):
        with pytest.raises(EmptyTypicalSet):
            typical_set([0.5, 0.5], 3, 0)

    def test_full_space(self):
        t = typical_set([0.3, 0.7], 5, 1.0)
        assert len(t) == 32

    def test_lexicographic_and_admissible(self):
        p, n, d = (0.75, 0.25), 8, 0.125
        t = typical_set(p, n, d)
        assert list(t.members) == sorted(t.members)
        for x in t.members:
            assert all(abs(x.count(s) / n - p[s]) <= d + 1e-12 for s in range(2))
        # counts of 1 within [1, 3]
        assert len(t) == math.comb(8, 1) + math.comb(8, 2) + math.comb(8, 3)

    def test_invalid(self):
        with pytest.raises(ValueError):
            typical_set([0.5, 0.6], 2, 0.1)
        with pytest.raises(ValueError):
            typical_set([0.5, 0.5], 0, 0.1)

    def test_basis_indices(self):
        t = typical_set([0.2, 0.3, 0.5], 2, 1.0)
        assert t.basis_indices().tolist() == list(range(9))


class TestTypicalWeight:
    def test_full(self):
        assert abs(typical_weight([0.3, 0.7], 9, 1.0) - 1) < 1e-12

    def test_half(self):
        assert abs(typical_weight([0.5, 0.5], 2, 0) - 0.5) < 1e-15

    def test_n20_matches_enumeration(self):
        assert abs(typical_weight([0.75, 0.25], 20, 0.1) - brute_weight([0.75, 0.25], 20, 0.1)) < 1e-12

    def test_n20_frozen(self):
        # frozen from the enumeration oracle above
        assert abs(typical_weight([0.75, 0.25], 20, 0.1) - 0.8069277106123991) < 1e-12

    @pytest.mark.parametrize("p", [(0.75, 0.25), (0.5, 0.5), (0.9, 0.1), (0.2, 0.3, 0.5), (0.25, 0.25, 0.5)])
    @pytest.mark.parametrize("delta", [0.0, 0.05, 0.125, 0.3])
    def test_brute_force(self, p, delta):
        nmax = 12 if len(p) == 2 else 9
        for n in range(1, nmax + 1):
            oracle = brute_weight(p, n, delta)
            if oracle is None:
                with pytest.raises(EmptyTypicalSet):
                    typical_weight(p, n, delta)
            else:
                assert abs(typical_weight(p, n, delta) - oracle) < 1e-12

    @pytest.mark.parametrize("n", [10, 11, 12])
    def test_brute_force_ternary_n12(self, n):
        p = (0.2, 0.3, 0.5)
        assert abs(typical_weight(p, n, 0.15) - brute_weight(p, n, 0.15)) < 1e-12

    def test_matches_set_weight(self):
        t = typical_set([0.75, 0.25], 10, 0.1)
        assert abs(t.weight() - typical_weight([0.75, 0.25], 10, 0.1)) < 1e-12

    def test_binary_closed_form(self):
        p1, n, d = 0.25, 30, 0.1
        expect = sum(math.comb(n, w) * p1**w * (1 - p1) ** (n - w) for w in range(n + 1) if abs(w / n - p1) <= d)
        assert abs(typical_weight([1 - p1, p1], n, d) - expect) < 1e-12

    def test_nondecreasing_in_n(self):
        # stated convergence property; n=4 -> 8 is a counterexample (0.4219 -> 0.3115)
        ws = [typical_weight([0.75, 0.25], n, 0.1) for n in (4, 8, 16, 32, 64)]
        assert all(b >= a - 1e-15 for a, b in zip(ws, ws[1:]))

    @given(st.floats(0.05, 0.95), st.integers(1, 40), st.floats(0, 0.5), st.floats(0, 0.5))
    def test_monotone_in_delta(self, p1, n, d1, d2):
        lo, hi = sorted((d1, d2))
        try:
            w_lo = typical_weight([1 - p1, p1], n, lo)
        except EmptyTypicalSet:
            w_lo = 0.0
        try:
            w_hi = typical_weight([1 - p1, p1], n, hi)
        except EmptyTypicalSet:
            w_hi = 0.0
        assert w_hi >= w_lo - 1e-12


class TestCodebook:
    @given(st.integers(1, 8), st.floats(0.05, 0.5))
    def test_round_trip(self, n, delta):
        try:
            cb = build_codebook([0.75, 0.25], n, delta)
        except EmptyTypicalSet:
            return
        for i, x in enumerate(cb.typical.members):
            assert cb.encode(x) == i
            assert cb.decode(cb.encode(x)) == x

    def test_exact_mode_is_support(self):
        cb = build_codebook([0.5, 0.0, 0.5], 3, None)
        assert cb.D == 8
        assert all(1 not in x for x in cb.typical.members)

    def test_register_dim(self):
        assert build_codebook([1.0, 0.0], 3, None).register_dim == 2

    def test_json(self):
        doc = json.loads(build_codebook([0.5, 0.5], 2, 0).to_json())
        assert doc["members"] == [[0, 1], [1, 0]] and doc["delta"] == 0


class TestCompression:
    def test_supported_state_lossless(self):
        cb = build_codebook([0.5, 0.5], 2, 0)
        s = LoccSession(0)
        psi = PureState.from_amplitudes(np.array([0, 1, 1, 0]) / math.sqrt(2), (2, 2))
        regs = s.add_local_state(ALICE, psi)
        ok, c = schumacher_compress(s, ALICE, regs, cb)
        assert ok and c.dim == 2
        assert [e.prob for e in s.transcript if e.type == "measure"] == pytest.approx([1.0])
        out = schumacher_decompress(s, ALICE, c, cb)
        assert abs(s.fidelity(out, psi) - 1) < 1e-12

    def test_full_space_invertible(self, rng):
        n = 4
        cb = build_codebook([0.5, 0.5], n, 1.0)
        s = LoccSession(0)
        target = product_state([[1, 1]] * n)
        regs = s.add_local_state(ALICE, target)
        ok, c = schumacher_compress(s, ALICE, regs, cb)
        assert ok and c.dim == 2**n
        out = schumacher_decompress(s, ALICE, c, cb)
        assert abs(s.fidelity(out, target) - 1) < 1e-12

    def test_success_probability_is_weight(self):
        n, delta = 8, 0.125
        cb = build_codebook([0.75, 0.25], n, delta)
        s = LoccSession(0, script=(0,))
        regs = s.add_local_state(ALICE, product_state([[math.sqrt(0.75), 0.5]] * n))
        ok, _ = schumacher_compress(s, ALICE, regs, cb)
        assert ok
        ev = [e for e in s.transcript if e.type == "measure"][0]
        assert abs(ev.prob - typical_weight([0.75, 0.25], n, delta)) < 1e-12

    def test_failure_branch(self):
        cb = build_codebook([0.75, 0.25], 4, 0.0)
        s = LoccSession(0, script=(1,))
        regs = s.add_local_state(ALICE, product_state([[math.sqrt(0.75), 0.5]] * 4))
        ok, reg = schumacher_compress(s, ALICE, regs, cb)
        assert not ok and reg is None

    def test_codebook_mismatch(self):
        cb = build_codebook([0.5, 0.5], 3, 1.0)
        s = LoccSession(0)
        regs = s.add_local_state(ALICE, product_state([[1, 0]] * 2))
        with pytest.raises(ValueError):
            schumacher_compress(s, ALICE, regs, cb)

    def test_correlated_halves(self):
        # both parties compress sum_x c_x |x>_A |x>_B with the same codebook
        n = 3
        cb = build_codebook([0.75, 0.25], n, 0.34)
        s = LoccSession(0, script=(0,))
        pairs = [s.add_entangled_pair([0.75, 0.25], 2) for _ in range(n)]
        ok_a, ca = schumacher_compress(s, ALICE, [p[0] for p in pairs], cb)
        ok_b, cb_reg = schumacher_compress(s, Party.BOB, [p[1] for p in pairs], cb)
        assert ok_a and ok_b
        probs = np.array([math.prod(0.75 if b == 0 else 0.25 for b in x) for x in cb.typical.members])
        amps = np.zeros((cb.D, cb.D), dtype=complex)
        amps[np.arange(cb.D), np.arange(cb.D)] = np.sqrt(probs / probs.sum())
        target = PureState((cb.D, cb.D), amps.ravel())
        assert abs(s.fidelity([ca, cb_reg], target) - 1) < 1e-12


class TestBlockPartition:
    def test_validation(self):
        with pytest.raises(ValueError):
            BlockPartition(4, [(0, 1), (1, 2)], [0.5, 0.5])
        with pytest.raises(ValueError):
            BlockPartition(4, [(0, 1)], [0.5, 0.5])
        with pytest.raises(ValueError):
            BlockPartition(2, [(0, 5)], [1.0])

    def test_json_round_trip(self):
        bp = BlockPartition(5, [(0, 1), (2, 3, 4)], [0.4, 0.6])
        doc = json.loads(bp.to_json())
        assert doc == {"blocks": [[0, 1], [2, 3, 4]], "weights": [0.4, 0.6]}
        assert BlockPartition.from_json(bp.to_json()) == bp

    @pytest.mark.parametrize("sizes,d", [((2, 3), 6), ((2, 2), 2), ((4, 2, 1), 4), ((1, 1), 1)])
    def test_lcm(self, sizes, d):
        blocks, start = [], 0
        for r in sizes:
            blocks.append(tuple(range(start, start + r)))
            start += r
        bp = BlockPartition(start, blocks, [1 / len(sizes)] * len(sizes))
        assert lcm_of_block_sizes(bp) == d

    def test_nonzero_drops_empty_weight(self):
        bp = BlockPartition(5, [(0, 1), (2, 3, 4)], [1.0, 0.0]).nonzero()
        assert bp.blocks == ((0, 1),) and lcm_of_block_sizes(bp) == 2


class TestPositionPartition:
    def test_six_subspaces(self):
        bp = position_partition(3, 0.5, counts={1, 2})
        assert len(bp.blocks) == 6
        for block, w in zip(bp.blocks, bp.weights):
            twos = {np.base_repr(i, 3).zfill(3).count("2") for i in block}
            assert len(twos) == 1
            k = twos.pop()
            assert len(block) == 2 ** (3 - k)
            assert abs(w - 0.5**3) < 1e-15

    def test_one_two_weight(self):
        c2 = 0.3
        bp = position_partition(3, c2, counts={1})
        assert all(abs(w - c2 * (1 - c2) ** 2) < 1e-15 for w in bp.weights)

    def test_single_signal(self):
        bp = position_partition(1, 0.3)
        assert bp.blocks == ((0, 1), (2,))
        assert bp.weights == pytest.approx((0.7, 0.3))

    def test_full_partition_covers(self):
        bp = position_partition(3, 0.4)
        assert bp.covered == tuple(range(27))
        assert abs(bp.total_weight() - 1) < 1e-12

    def test_count_window(self):
        assert count_window(4, 0.5, 0.25) == [1, 2, 3]
        assert count_window(3, 0.5, 0.1) == [1, 2]
        assert count_window(2, 0.5, None) == [0, 1, 2]

    def test_weight_constancy(self, rng):
        n1, c2 = 3, 0.5
        bp = position_partition(n1, c2)
        for _ in range(100):
            sigs = []
            for _ in range(n1):
                ab = rng.normal(size=2) + 1j * rng.normal(size=2)
                ab *= math.sqrt(1 - c2) / np.linalg.norm(ab)
                sigs.append([ab[0], ab[1], math.sqrt(c2) * np.exp(1j * rng.uniform(0, 2 * np.pi))])
            amps = product_state(sigs).amps
            for block, w in zip(bp.blocks, bp.weights):
                assert abs(np.sum(np.abs(amps[list(block)]) ** 2) - w) < 1e-10

    @pytest.mark.parametrize("n1,delta", [(4, 0.25), (6, 0.2), (8, 0.15)])
    def test_block_size_bounds(self, n1, delta):
        c2 = 0.5
        bp = position_partition(n1, c2, delta=delta)
        counts = count_window(n1, c2, delta)
        # induced window half-width once counts are rounded outward
        dprime = max(abs(w / n1 - c2) for w in counts)
        lo, hi = 2 ** (n1 * (1 - c2 - dprime)), 2 ** (n1 * (1 - c2 + dprime))
        assert all(lo - 1e-9 <= r <= hi + 1e-9 for r in bp.sizes)
