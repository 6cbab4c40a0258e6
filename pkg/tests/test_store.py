import datetime as dt
import json
import os
import tracemalloc
from decimal import Decimal

import pytest

from pricescope.extract import DOM_PATH, Money, PriceSelector
from pricescope.store import (AppendLog, CheckRecord, ObservationStore,
                              PriceObservation, ReplayQuery, SnapshotStore)

DAY_EPOCH = 1359676800.0  # 2013-02-01 UTC


def obs(check, vantage, amount="10.00", rep=0, domain="shop.test",
        uri=None, fetched_at=DAY_EPOCH):
    return PriceObservation(
        check_id=check, vantage=vantage,
        money=Money(Decimal(amount), "USD"),
        fetched_at=fetched_at, fetch_latency=0.05,
        snapshot_ref="f" * 64,
        product_uri=uri or f"http://{domain}/product/x",
        domain=domain, rep=rep)


class TestAppendLog:
    def test_round_trip(self, tmp_path):
        log = AppendLog(tmp_path / "log.jsonl")
        log.append({"a": 1})
        log.append({"b": 2})
        log.close()
        assert list(AppendLog(tmp_path / "log.jsonl").iter_records()) == \
            [{"a": 1}, {"b": 2}]

    def test_torn_tail_discarded_on_read(self, tmp_path):
        path = tmp_path / "log.jsonl"
        log = AppendLog(path)
        log.append({"a": 1})
        log.close()
        with open(path, "ab") as f:
            f.write(b'{"torn": tru')  # crash mid-write
        assert list(AppendLog(path).iter_records()) == [{"a": 1}]

    def test_torn_tail_truncated_on_reopen(self, tmp_path):
        path = tmp_path / "log.jsonl"
        log = AppendLog(path)
        log.append({"a": 1})
        log.close()
        with open(path, "ab") as f:
            f.write(b'{"torn": ')
        log = AppendLog(path)
        log.append({"b": 2})
        log.close()
        assert list(AppendLog(path).iter_records()) == [{"a": 1}, {"b": 2}]

    def test_concurrent_appends_total_order(self, tmp_path):
        import threading
        log = AppendLog(tmp_path / "log.jsonl")
        def writer(k):
            for i in range(200):
                log.append({"w": k, "i": i})
        threads = [threading.Thread(target=writer, args=(k,)) for k in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        log.close()
        records = list(AppendLog(tmp_path / "log.jsonl").iter_records())
        assert len(records) == 800
        for k in range(4):
            mine = [r["i"] for r in records if r["w"] == k]
            assert mine == sorted(mine)  # per-writer order preserved


class TestSnapshotStore:
    def test_content_addressing(self, tmp_path):
        snaps = SnapshotStore(tmp_path)
        ref1 = snaps.put("<html>one</html>")
        ref2 = snaps.put("<html>one</html>")
        ref3 = snaps.put("<html>two</html>")
        assert ref1 == ref2 != ref3
        assert snaps.get(ref1) == "<html>one</html>"
        assert snaps.exists(ref3)

    def test_unicode_body(self, tmp_path):
        snaps = SnapshotStore(tmp_path)
        body = "<html>49,05 €</html>"
        assert snaps.get(snaps.put(body)) == body


class TestReplay:
    def test_deterministic_order(self, tmp_path):
        store = ObservationStore(tmp_path)
        store.append_observation(obs("c2", "b"))
        store.append_observation(obs("c1", "z"))
        store.append_observation(obs("c2", "a"))
        store.append_observation(obs("c1", "a"))
        keys = [(o.check_id, o.vantage) for o in store.replay()]
        assert keys == [("c1", "a"), ("c1", "z"), ("c2", "a"), ("c2", "b")]

    def test_empty_store(self, tmp_path):
        store = ObservationStore(tmp_path)
        assert list(store.replay()) == []

    def test_filters(self, tmp_path):
        store = ObservationStore(tmp_path)
        store.append_observation(obs("c1", "a", domain="one.test"))
        store.append_observation(obs("c2", "a", domain="two.test"))
        store.append_observation(obs("c3", "b", domain="one.test",
                                     fetched_at=DAY_EPOCH + 5 * 86400))
        assert len(list(store.replay(ReplayQuery(domain="one.test")))) == 2
        assert len(list(store.replay(ReplayQuery(vantage="a")))) == 2
        assert len(list(store.replay(ReplayQuery(
            date_from=dt.date(2013, 2, 2))))) == 1
        assert len(list(store.replay(ReplayQuery(
            domain="one.test", date_to=dt.date(2013, 2, 1))))) == 1

    def test_record_round_trip(self, tmp_path):
        store = ObservationStore(tmp_path)
        original = obs("c1", "a", amount="12.34").with_flag("NoiseSuspect")
        store.append_observation(original)
        replayed = next(store.replay())
        assert replayed == original

    def test_full_corpus_scale_streams_with_bounded_memory(self, tmp_path):
        # ~188K observations: the aggregate scale the store must stream
        store = ObservationStore(tmp_path)
        n_checks, vantages = 13500, 14
        with open(store.observations.path, "w", encoding="utf-8") as f:
            for c in range(n_checks):
                for v in range(vantages):
                    rec = obs(f"c{c:05d}", f"v{v:02d}",
                              amount=f"{10 + (c % 90)}.00").to_record()
                    f.write(json.dumps(rec, separators=(",", ":")) + "\n")
        total = n_checks * vantages
        assert total == 189000

        tracemalloc.start()
        count = 0
        last_key = None
        for o in store.replay():
            key = (o.check_id, o.vantage)
            if last_key is not None:
                assert key >= last_key
            last_key = key
            count += 1
        peak = tracemalloc.get_traced_memory()[1]
        tracemalloc.stop()
        assert count == total
        assert peak < 120 * 1024 * 1024  # index-bounded, not corpus-bounded


class TestCheckLog:
    def test_round_trip(self, tmp_path):
        store = ObservationStore(tmp_path)
        record = CheckRecord(
            check_id="c1", product_uri="http://shop.test/p",
            domain="shop.test",
            selector=PriceSelector(kind=DOM_PATH, expression="body/div[1]"),
            requester="user-1", submitted_at=DAY_EPOCH)
        store.append_check(record)
        loaded = store.load_checks()["c1"]
        assert loaded.selector.expression == "body/div[1]"
        assert loaded.requester == "user-1"
