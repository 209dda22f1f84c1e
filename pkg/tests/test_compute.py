import random

import pytest

from ranshare.compute import (
    GpuDevice,
    Server,
    TenantClass,
    allocate,
    free_capacity,
    partition_gpu,
    repartition,
)
from ranshare.errors import (
    ActiveAllocationConflict,
    ClassMismatch,
    GranularityViolation,
    PartitionOverflow,
)

RAN, AI, FREE = TenantClass.RAN, TenantClass.AI, TenantClass.FREE


def gpu(gran=0.05, gid="gpu1"):
    return GpuDevice(id=gid, partition_granularity=gran)


class TestPartition:
    def test_poc_split_no_free_remainder(self):
        instances = partition_gpu(gpu(0.1), [0.4, 0.6], [RAN, AI])
        assert [(i.compute_fraction, i.tenant_class) for i in instances] == [
            (0.4, RAN),
            (0.6, AI),
        ]

    def test_identity_partition(self):
        instances = partition_gpu(gpu(), [1.0], [RAN])
        assert len(instances) == 1
        assert instances[0].compute_fraction == 1.0

    def test_overflow(self):
        with pytest.raises(PartitionOverflow):
            partition_gpu(gpu(), [0.5, 0.6], [RAN, AI])

    def test_granularity_violation(self):
        with pytest.raises(GranularityViolation):
            partition_gpu(gpu(0.1), [0.45], [RAN])

    def test_leftover_becomes_free(self):
        instances = partition_gpu(gpu(), [0.4, 0.3], [RAN, AI])
        assert instances[-1].tenant_class is FREE
        assert instances[-1].compute_fraction == pytest.approx(0.3, abs=1e-12)

    def test_granularity_must_divide_one(self):
        with pytest.raises(GranularityViolation):
            GpuDevice(id="g", partition_granularity=0.3)

    def test_partition_arithmetic_exact(self):
        # exactness is guaranteed on the internal unit grid; the decimal
        # view sums to 1.0 under correctly-rounded (fsum) accumulation
        import math

        rng = random.Random(11)
        for _ in range(200):
            units = rng.choice([4, 5, 10, 20, 7])
            g = gpu(1.0 / units, "g")
            n = rng.randint(1, 3)
            cuts = sorted(rng.sample(range(1, units), min(n, units - 1)))
            sizes = [a - b for a, b in zip(cuts + [units], [0] + cuts)]
            fracs = [s / units for s in sizes if s]
            classes = [rng.choice([RAN, AI, FREE]) for _ in fracs]
            instances = partition_gpu(g, fracs, classes)
            assert sum(i.units for i in instances) == g.total_units
            assert math.fsum(i.compute_fraction for i in instances) == 1.0


class TestAllocate:
    def _instance(self, fraction=0.4, cls=RAN):
        return partition_gpu(gpu(), [fraction], [cls])[0]

    def test_fits_within_slice(self):
        alloc = allocate(self._instance(0.4), 0.35, RAN)
        assert alloc.granted_fraction == 0.35
        assert alloc.shortfall_fraction == 0.0

    def test_clipped_at_slice(self):
        alloc = allocate(self._instance(0.4), 0.50, RAN)
        assert alloc.granted_fraction == pytest.approx(0.4, abs=1e-12)
        assert alloc.shortfall_fraction == pytest.approx(0.1, abs=1e-12)

    def test_zero_demand(self):
        alloc = allocate(self._instance(0.6, AI), 0.0, AI)
        assert alloc.granted_fraction == 0.0
        assert alloc.shortfall_fraction == 0.0

    def test_class_mismatch(self):
        with pytest.raises(ClassMismatch):
            allocate(self._instance(0.4, RAN), 0.1, AI)

    def test_free_accepts_any_class(self):
        inst = self._instance(0.5, FREE)
        assert allocate(inst, 0.2, RAN).granted_fraction == 0.2
        assert allocate(inst, 0.4, AI).granted_fraction == pytest.approx(0.3)

    def test_slot_accumulation(self):
        inst = self._instance(0.4)
        allocate(inst, 0.3, RAN)
        second = allocate(inst, 0.3, RAN)
        assert second.granted_fraction == pytest.approx(0.1, abs=1e-12)
        inst.reset_slot()
        assert allocate(inst, 0.3, RAN).granted_fraction == 0.3

    def test_grant_plus_shortfall_equals_demand(self):
        rng = random.Random(5)
        for _ in range(300):
            inst = self._instance(rng.randrange(1, 21) * 0.05)
            demand = rng.uniform(0, 1.5)
            alloc = allocate(inst, demand, RAN)
            assert alloc.granted_fraction + alloc.shortfall_fraction == pytest.approx(
                demand, abs=1e-9
            )
            assert alloc.granted_fraction <= inst.compute_fraction + 1e-9


class TestRepartition:
    def test_grow_ran_with_empty_ai(self):
        g = gpu()
        old = partition_gpu(g, [0.4, 0.6], [RAN, AI])
        new = repartition(g, old, [0.7, 0.3], [RAN, AI])
        assert [i.compute_fraction for i in new] == [0.7, 0.3]

    def test_idempotent(self):
        g = gpu()
        old = partition_gpu(g, [0.4, 0.6], [RAN, AI])
        new = repartition(g, old, [0.4, 0.6], [RAN, AI])
        assert [i.compute_fraction for i in new] == [0.4, 0.6]

    def test_shrink_below_granted_conflicts(self):
        g = gpu()
        old = partition_gpu(g, [0.4, 0.6], [RAN, AI])
        allocate(old[0], 0.4, RAN)
        with pytest.raises(ActiveAllocationConflict):
            repartition(g, old, [0.2, 0.8], [RAN, AI])

    def test_conservation_under_random_allocations(self):
        rng = random.Random(7)
        for _ in range(100):
            g = gpu()
            fracs = [0.25, 0.5, 0.25]
            instances = partition_gpu(g, fracs, [RAN, AI, FREE])
            for _ in range(10):
                inst = rng.choice(instances)
                cls = inst.tenant_class if inst.tenant_class is not FREE else rng.choice([RAN, AI])
                allocate(inst, rng.uniform(0, 0.6), cls)
            assert sum(i.granted for i in instances) <= 1.0 + 1e-9


class TestIsolation:
    def test_ran_allocations_unaffected_by_ai_saturation(self):
        rng = random.Random(99)
        for _ in range(50):
            demands = [rng.uniform(0, 0.6) for _ in range(40)]

            def run(ai_demand):
                g = gpu()
                ran_slice, ai_slice = partition_gpu(g, [0.4, 0.6], [RAN, AI])
                log = []
                for d in demands:
                    ran_slice.reset_slot()
                    ai_slice.reset_slot()
                    log.append(repr(allocate(ran_slice, d, RAN)))
                    allocate(ai_slice, ai_demand, AI)
                return log

            assert run(0.0) == run(10.0)


class TestFreeCapacity:
    def test_partial_grants(self):
        server = Server(id="s", gpus=(gpu(),))
        instances = partition_gpu(server.gpus[0], [0.4, 0.6], [RAN, AI])
        allocate(instances[0], 0.4, RAN)
        allocate(instances[1], 0.55, AI)
        free = free_capacity(server, {"gpu1": instances})
        assert free == [pytest.approx(0.05, abs=1e-9)]

    def test_idle_gpu(self):
        server = Server(id="s", gpus=(gpu(),))
        instances = partition_gpu(server.gpus[0], [1.0], [FREE])
        assert free_capacity(server, {"gpu1": instances}) == [1.0]

    def test_poc_server_frees_whole_second_gpu(self):
        g1, g2 = gpu(gid="gpu1"), gpu(gid="gpu2")
        server = Server(id="s", gpus=(g1, g2))
        inst1 = partition_gpu(g1, [0.4, 0.6], [RAN, AI])
        allocate(inst1[0], 0.4, RAN)
        allocate(inst1[1], 0.6, AI)
        inst2 = partition_gpu(g2, [1.0], [FREE])
        free = free_capacity(server, {"gpu1": inst1, "gpu2": inst2})
        assert free == [pytest.approx(0.0, abs=1e-9), 1.0]

    def test_ran_headroom_hidden_unless_visible(self):
        server = Server(id="s", gpus=(gpu(),))
        instances = partition_gpu(server.gpus[0], [0.4, 0.6], [RAN, AI])
        allocate(instances[0], 0.1, RAN)  # 0.3 headroom inside the RAN slice
        hidden = free_capacity(server, {"gpu1": instances})
        visible = free_capacity(server, {"gpu1": instances}, ran_headroom_visible=True)
        assert hidden == [pytest.approx(0.6, abs=1e-9)]
        assert visible == [pytest.approx(0.9, abs=1e-9)]
