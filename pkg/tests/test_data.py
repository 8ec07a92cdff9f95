import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cardpattern.core import Label, TransactionSequence
from cardpattern.data import (FraudGenConfig, InsufficientLegitimateData, MalformedBundle, MissingColumn,
                              RejectionOverflow, UnreadableFile, assemble_datasets, block_rng,
                              build_experiment, default_fraud_config, dumps_bundle, dumps_stream,
                              gen_fraud_block, ingest_csv, loads_bundle, sample_csv_path,
                              synth_purchase_stream, write_atomic)


def legit_stream(n=200, seed=0):
    rng = np.random.default_rng(seed)
    return TransactionSequence.from_columns(np.round(rng.lognormal(4, 0.5, n), 2), rng.integers(1, 8, n))


def write_csv(tmp_path, text, name="in.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestIngest:
    def test_filters_and_maps_regions(self, tmp_path):
        p = write_csv(tmp_path, "Transaction Amount,Vendor State/Province\n10,NY\n-5,NY\n20,CA\n")
        seq, rep = ingest_csv(p)
        assert seq.amounts.tolist() == [10.0, 20.0]
        assert seq.regions == [1, 2]
        assert (rep.rows_read, rep.rows_dropped) == (3, 1)

    def test_repeatable(self, tmp_path):
        p = write_csv(tmp_path, "Transaction Amount,Vendor State/Province\n1,VA\n2,MD\n3,VA\n")
        assert ingest_csv(p)[1].region_map == ingest_csv(p)[1].region_map == {"VA": 1, "MD": 2}

    def test_missing_column(self, tmp_path):
        p = write_csv(tmp_path, "Amount,Vendor State/Province\n1,VA\n")
        with pytest.raises(MissingColumn):
            ingest_csv(p)

    def test_custom_columns_and_quotes(self, tmp_path):
        p = write_csv(tmp_path, 'amt,state,other\n"1,250.50",TX,x\n$3.00,TX,y\n,TX,z\n')
        seq, rep = ingest_csv(p, "amt", "state")
        assert seq.amounts.tolist() == [1250.5, 3.0]
        assert rep.rows_dropped == 1

    def test_missing_region_dropped(self, tmp_path):
        p = write_csv(tmp_path, "Transaction Amount,Vendor State/Province\n5,\n6,OH\n")
        seq, rep = ingest_csv(p)
        assert len(seq) == 1 and rep.rows_dropped == 1

    def test_unreadable(self, tmp_path):
        with pytest.raises(UnreadableFile):
            ingest_csv(tmp_path / "nope.csv")

    def test_bundled_sample(self):
        seq, rep = ingest_csv(sample_csv_path())
        assert len(seq) >= 200 and rep.rows_dropped == 0

    def test_sample_matches_its_generator(self):
        amounts, regions = synth_purchase_stream(2)
        seq, rep = ingest_csv(sample_csv_path())
        assert seq.amounts.tolist() == amounts
        inverse = {v: k for k, v in rep.region_map.items()}
        assert [inverse[r] for r in seq.regions] == regions


class TestFraudBlocks:
    def test_positive_and_from_pool(self):
        cfg = FraudGenConfig(30.0, 40.0, 5, seed=1)
        pool = [3, 3, 5, 9, 9, 9]
        for i in range(50):
            block = gen_fraud_block(cfg, pool, block_rng(1, i))
            assert len(block) == 5
            assert all(a > 0 for a, _ in block)
            assert all(r in pool for _, r in block)

    def test_regions_are_sub_multiset(self):
        pool = [1, 2, 2, 3, 4, 4, 4]
        block = gen_fraud_block(FraudGenConfig(10, 1, 5), pool, block_rng(0, 0))
        for r in set(pool):
            assert sum(1 for _, b in block if b == r) <= pool.count(r)

    def test_deterministic(self):
        cfg = FraudGenConfig(100, 10, 5, seed=3)
        assert gen_fraud_block(cfg, [1, 2], block_rng(3, 7)) == gen_fraud_block(cfg, [1, 2], block_rng(3, 7))

    def test_streams_independent_of_block_count(self):
        legit = legit_stream(300)
        cfg = default_fraud_config(legit, seed=4)
        a = build_experiment(legit, cfg, count=5)
        b = build_experiment(legit, cfg, count=20)
        for x, y in zip(a.datasets_F, b.datasets_F):
            assert x.test == y.test

    def test_monte_carlo_mean(self):
        cfg = FraudGenConfig(100, 10, 100_000)
        block = gen_fraud_block(cfg, [1], np.random.default_rng(0))
        assert abs(np.mean([a for a, _ in block]) - 100) < 0.5

    def test_lognormal_moments(self):
        cfg = FraudGenConfig(100, 30, 100_000, dist="lognormal")
        a = np.array([v for v, _ in gen_fraud_block(cfg, [1], np.random.default_rng(0))])
        assert abs(a.mean() - 100) < 0.5 and abs(a.std() - 30) < 0.5 and a.min() > 0

    def test_rejection_overflow(self):
        with pytest.raises(RejectionOverflow):
            gen_fraud_block(FraudGenConfig(-1e6, 1.0, 1), [1], np.random.default_rng(0))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FraudGenConfig(1.0, 0.0)
        with pytest.raises(ValueError):
            FraudGenConfig(1.0, 1.0, block_len=0)


class TestAssemble:
    @pytest.fixture
    def exp(self):
        legit = legit_stream(210)
        return build_experiment(legit, default_fraud_config(legit, seed=0)), legit

    def test_sizes(self, exp):
        e, _ = exp
        assert len(e.datasets_L) == len(e.datasets_F) == 20
        for ds in e:
            assert len(ds.sequence) == 105 and ds.train_len == 100

    def test_first_window_is_base(self, exp):
        e, legit = exp
        l1 = e.datasets_L[0]
        assert l1.train.amounts.tolist() == legit.amounts[:100].tolist()
        assert l1.test.amounts.tolist() == legit.amounts[100:105].tolist()
        assert e.datasets_L[1].train.amounts.tolist() == legit.amounts[5:105].tolist()

    def test_fraud_share_training(self, exp):
        e, legit = exp
        for ds in e.datasets_F:
            assert ds.train == e.datasets_F[0].train
            assert ds.train.amounts.tolist() == legit.amounts[:100].tolist()
            assert ds.kind is Label.FRAUDULENT and ds.test.label is Label.FRAUDULENT

    def test_windows_cover_stream(self, exp):
        e, legit = exp
        seen = {}
        for i, ds in enumerate(e.datasets_L):
            for j, a in enumerate(ds.sequence.amounts):
                seen.setdefault(5 * i + j, a)
        assert [seen[k] for k in range(200)] == legit.amounts[:200].tolist()

    def test_insufficient(self):
        legit = legit_stream(150)
        with pytest.raises(InsufficientLegitimateData):
            build_experiment(legit, default_fraud_config(legit))

    def test_explicit_blocks(self):
        legit = legit_stream(110)
        blocks = [[(500.0, 1)] * 5, [(600.0, 2)] * 5]
        e = assemble_datasets(legit, blocks, count=2)
        assert e.datasets_F[1].test.amounts.tolist() == [600.0] * 5


class TestBundle:
    def test_round_trip_bit_exact(self):
        legit = legit_stream(210, seed=5)
        e = build_experiment(legit, default_fraud_config(legit, seed=5))
        text = dumps_bundle(e)
        back = loads_bundle(text)
        for a, b in zip(e, back):
            assert (a.dataset_id, a.kind) == (b.dataset_id, b.kind)
            assert a.sequence.amounts.tobytes() == b.sequence.amounts.tobytes()
            assert a.sequence.regions == b.sequence.regions
        assert dumps_bundle(back) == text

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(1e-9, 1e12, allow_nan=False), min_size=1, max_size=30))
    def test_stream_round_trip(self, amounts):
        seq = TransactionSequence.from_columns(amounts, [1] * len(amounts))
        back = loads_bundle(dumps_stream(seq))
        assert back.amounts.tobytes() == seq.amounts.tobytes()

    def test_malformed(self):
        with pytest.raises(MalformedBundle):
            loads_bundle("a,b\n1,2\n")
        with pytest.raises(MalformedBundle):
            loads_bundle("")
        with pytest.raises(MalformedBundle):
            loads_bundle("dataset_id,kind,index,amount,region,split\n1,L,1,x,1,train\n")

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        write_atomic(tmp_path / "a.txt", "hi")
        write_atomic(tmp_path / "b.bin", b"\x00\x01")
        assert sorted(p.name for p in tmp_path.iterdir()) == ["a.txt", "b.bin"]
        assert (tmp_path / "b.bin").read_bytes() == b"\x00\x01"
