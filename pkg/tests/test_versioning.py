from lsmgraph.versioning import VersionManager


def test_publish_and_acquire():
    mgr = VersionManager()
    v1 = mgr.publish((), (1, 2), {})
    h = mgr.acquire(10)
    assert h.tau == 10
    assert h.version is v1
    h.close()


def test_retire_on_release():
    retired = []
    mgr = VersionManager(on_retire=retired.append)
    mgr.publish((), (1,), {})
    h = mgr.acquire(5)
    mgr.publish((), (2,), {})  # old version kept alive by h
    assert mgr.version_count() == 2
    h.close()
    assert mgr.version_count() == 1
    # the bootstrap empty version retires at the first publish, the pinned
    # one only when its handle closes
    assert retired[-1].l0_fids == (1,)
    assert len(retired) == 2


def test_unpinned_old_version_retired_immediately():
    mgr = VersionManager()
    mgr.publish((), (1,), {})
    mgr.publish((), (2,), {})
    assert mgr.version_count() == 1


def test_oldest_active_tau():
    mgr = VersionManager()
    mgr.publish((), (), {})
    assert mgr.oldest_active_tau() is None
    h1 = mgr.acquire(9)
    h2 = mgr.acquire(4)
    assert mgr.oldest_active_tau() == 4
    h2.close()
    assert mgr.oldest_active_tau() == 9
    h1.close()
    assert mgr.oldest_active_tau() is None


def test_live_l0_fids_union():
    mgr = VersionManager()
    mgr.publish((), (1, 2), {})
    h = mgr.acquire(1)
    mgr.publish((), (3,), {})
    assert mgr.live_l0_fids() == {1, 2, 3}
    h.close()
    assert mgr.live_l0_fids() == {3}


def test_handle_close_idempotent():
    mgr = VersionManager()
    mgr.publish((), (), {})
    h = mgr.acquire(1)
    h.close()
    h.close()
    assert mgr.version_count() == 1
