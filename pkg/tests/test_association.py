import logging
import random

import pytest
from hypothesis import given, strategies as st

from vralpr.association import (associate_vehicle, mark_to_frame_index, own_mark,
                                ownership_window, select_vehicle)
from vralpr.detection import BBox, Mark
from vralpr.errors import NoVehicleMatch
from vralpr.rhythm import ChunkSpec


def mark_at(chunk, y1, chunks, x0=0, x1=10):
    return Mark.from_vr(BBox(x0, max(0, y1 - 5), x1, y1), chunk, chunks.start_frame(chunk))


def test_frame_index_examples():
    c0 = ChunkSpec(600, 0)
    assert mark_to_frame_index(mark_at(0, 138, c0), c0) == 137
    assert mark_to_frame_index(mark_at(2, 43, c0), c0) == 1242
    c1 = ChunkSpec(600, 100)
    assert mark_to_frame_index(mark_at(1, 600, c1), c1) == 1099


def test_frame_index_clamped_to_video():
    c = ChunkSpec(10, 0)
    m = Mark(BBox(0, 0, 4, 12), 0, 11)
    assert mark_to_frame_index(m, c, n_frames=10) == 9


def test_ownership_examples():
    c = ChunkSpec(600, 0)
    assert own_mark(mark_at(3, 17, c), c)
    assert own_mark(mark_at(0, 600, c), c)
    c = ChunkSpec(600, 100)
    assert not own_mark(Mark(BBox(0, 0, 4, 551), 1, 1050), c)
    assert own_mark(Mark(BBox(0, 0, 4, 51), 2, 1050), c)
    assert own_mark(Mark(BBox(0, 0, 4, 500), 0, 499), c)


def test_last_chunk_owns_its_tail():
    c = ChunkSpec(5, 2)  # 7 frames -> chunks [0,5) and [3,7)
    assert c.num_chunks(7) == 2
    assert ownership_window(1, c, n_frames=7) == (3, float("inf"))
    assert own_mark(Mark(BBox(0, 0, 1, 4), 1, 6), c, n_frames=7)
    assert not own_mark(Mark(BBox(0, 0, 1, 4), 1, 6), c)


def owners(frame, chunks, n):
    """Chunks whose VR rows include `frame` and whose window claims it."""
    out = []
    for k in range(chunks.num_chunks(n)):
        start = chunks.start_frame(k)
        if not start <= frame < min(start + chunks.chunk_len_T, n):
            continue
        lo, hi = ownership_window(k, chunks, n)
        if lo <= frame < hi:
            out.append(k)
    return out


def test_windows_partition_timeline_exhaustive():
    for t in range(1, 15):
        for v in range(t):
            c = ChunkSpec(t, v)
            for n in range(1, 50):
                for f in range(n):
                    assert len(owners(f, c, n)) == 1, (t, v, n, f)


def test_overlapping_chunks_report_a_boundary_mark_once():
    c = ChunkSpec(600, 100)
    # same vehicle seen in chunk 1's tail and chunk 2's head, bottom at 1050
    in_1 = Mark(BBox(0, 530, 10, 551), 1, 1050)
    in_2 = Mark(BBox(0, 30, 10, 51), 2, 1050)
    assert [own_mark(m, c) for m in (in_1, in_2)] == [False, True]


def test_associate_examples():
    mark = BBox(100, 0, 200, 5)
    a, b = BBox(90, 0, 210, 50), BBox(400, 0, 500, 50)
    assert associate_vehicle(mark, [b, a]) == a
    c, d = BBox(50, 0, 150, 50), BBox(120, 0, 260, 50)
    assert associate_vehicle(mark, [c, d]) == d
    with pytest.raises(NoVehicleMatch):
        associate_vehicle(mark, [BBox(300, 0, 400, 9), BBox(320, 0, 390, 9)])
    with pytest.raises(NoVehicleMatch):
        associate_vehicle(mark, [])


def test_min_overlap_ratio():
    mark = BBox(100, 0, 200, 5)
    box = BBox(170, 0, 300, 9)  # overlap 30 of 100
    assert associate_vehicle(mark, [box], 0.25) == box
    with pytest.raises(NoVehicleMatch):
        associate_vehicle(mark, [box], 0.31)


def test_tie_breaks_center_then_x0(caplog):
    mark = BBox(100, 0, 200, 5)
    wide = BBox(0, 0, 300, 9)      # overlap 100, center 150
    offset = BBox(100, 0, 220, 9)  # overlap 100, center 160
    with caplog.at_level(logging.WARNING):
        assert associate_vehicle(mark, [offset, wide]) == wide
    assert "ambiguous" in caplog.text
    same_center = BBox(50, 0, 250, 9)  # overlap 100, center 150: falls to x0
    assert associate_vehicle(mark, [same_center, wide]) == wide


boxes_st = st.lists(
    st.tuples(st.integers(0, 300), st.integers(1, 150)).map(lambda t: BBox(t[0], 0, t[0] + t[1], 10)),
    min_size=1, max_size=6)


@given(st.integers(0, 300), st.integers(1, 150), boxes_st, st.integers(0, 500))
def test_translation_invariance(mx, mw, boxes, shift):
    mark = BBox(mx, 0, mx + mw, 3)
    try:
        i = select_vehicle(mark, boxes)
    except NoVehicleMatch:
        with pytest.raises(NoVehicleMatch):
            select_vehicle(mark.shifted(shift, 0), [b.shifted(shift, 0) for b in boxes])
        return
    assert select_vehicle(mark.shifted(shift, 0), [b.shifted(shift, 0) for b in boxes]) == i


def test_selection_is_order_independent():
    rng = random.Random(0)
    for _ in range(200):
        mx = rng.randrange(200)
        mark = BBox(mx, 0, mx + rng.randrange(1, 80), 1)
        boxes = []
        for _ in range(rng.randrange(1, 6)):
            x = rng.randrange(250)
            boxes.append(BBox(x, 0, x + rng.randrange(1, 80), 1))
        try:
            best = associate_vehicle(mark, boxes)
        except NoVehicleMatch:
            continue
        rng.shuffle(boxes)
        assert associate_vehicle(mark, boxes) == best
