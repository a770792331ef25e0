import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vralpr.errors import ConfigError, EmptyChunk, LineOutOfBounds
from vralpr.rhythm import ChunkSpec, LineSpec, build_vr_chunk, iter_vr_chunks, sample_line
from vralpr.video_io import ArraySource, Frame


def indexed_frames(n, w=4, h=3):
    """Frame t is filled with t % 256, so VR rows identify their frame."""
    return ArraySource([np.full((h, w), t % 256, dtype=np.uint8) for t in range(n)])


def test_sample_constant_frame():
    f = Frame(np.full((10, 8), 128, np.uint8))
    assert (sample_line(f, LineSpec(4)) == 128).all()
    assert sample_line(f, LineSpec(4, 2, 5)).shape == (3,)


def test_sample_matches_programmatic_frame():
    w, h = 300, 6
    px = np.tile(np.arange(w) % 256, (h, 1)).astype(np.uint8)
    row = sample_line(Frame(px), LineSpec(3))
    for x in range(w):
        assert row[x] == x % 256


def test_sample_rgb_row_keeps_channels():
    px = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    np.testing.assert_array_equal(sample_line(Frame(px), LineSpec(1)), px[1])


@pytest.mark.parametrize("line", [LineSpec(5), LineSpec(-1), LineSpec(0, 3, 3), LineSpec(0, 0, 9)])
def test_line_out_of_bounds(line):
    with pytest.raises(LineOutOfBounds):
        sample_line(Frame(np.zeros((5, 8), np.uint8)), line)


def test_sample_is_a_copy():
    px = np.zeros((2, 2), np.uint8)
    row = sample_line(Frame(px), LineSpec(0))
    row[0] = 9
    assert px[0, 0] == 0


def test_five_identical_frames():
    src = ArraySource([np.full((3, 4), 7, np.uint8)] * 5)
    vr = build_vr_chunk(src, LineSpec(1), ChunkSpec(5, 0), 0)
    assert vr.rows == 5 and (vr.pixels == 7).all()


def test_second_chunk_starts_at_600():
    src = indexed_frames(1201, w=2, h=2)
    vr = build_vr_chunk(src, LineSpec(0), ChunkSpec(600, 0), 1)
    assert vr.start_frame == 600 and vr.rows == 600
    np.testing.assert_array_equal(vr.pixels[0], sample_line(src.read(600), LineSpec(0)))


def test_short_final_chunk():
    src = indexed_frames(7)
    vrs = list(iter_vr_chunks(src, LineSpec(0), ChunkSpec(5, 0)))
    assert [v.rows for v in vrs] == [5, 2]
    assert [v.start_frame for v in vrs] == [0, 5]


def test_empty_chunk():
    with pytest.raises(EmptyChunk):
        build_vr_chunk(indexed_frames(5), LineSpec(0), ChunkSpec(5, 0), 1)
    assert list(iter_vr_chunks(indexed_frames(0), LineSpec(0), ChunkSpec(5, 0))) == []


def test_chunk_spec_validation():
    for t, v in [(0, 0), (5, 5), (5, -1)]:
        with pytest.raises(ConfigError):
            ChunkSpec(t, v)
    assert ChunkSpec(600, 100).stride == 500


@pytest.mark.parametrize("n, t, v, expected", [
    (0, 5, 0, 0), (1, 5, 0, 1), (5, 5, 0, 1), (6, 5, 0, 2), (7, 5, 2, 2), (8, 5, 2, 2), (9, 5, 2, 3),
])
def test_num_chunks(n, t, v, expected):
    assert ChunkSpec(t, v).num_chunks(n) == expected


def test_num_chunks_covers_video_minimally():
    for t in range(1, 12):
        for v in range(t):
            c = ChunkSpec(t, v)
            for n in range(1, 60):
                k = c.num_chunks(n)
                assert c.start_frame(k - 1) + t >= n
                assert c.start_frame(k - 1) < n
                if k > 1:
                    assert c.start_frame(k - 2) + t < n


@st.composite
def videos(draw):
    n = draw(st.integers(1, 40))
    h = draw(st.integers(1, 8))
    w = draw(st.integers(1, 10))
    rgb = draw(st.booleans())
    seed = draw(st.integers(0, 2**32 - 1))
    shape = (n, h, w, 3) if rgb else (n, h, w)
    px = np.random.default_rng(seed).integers(0, 256, shape, dtype=np.uint8)
    row = draw(st.integers(0, h - 1))
    x0 = draw(st.integers(0, w - 1))
    x1 = draw(st.integers(x0 + 1, w))
    return px, LineSpec(row, x0, x1)


@settings(max_examples=60, deadline=None)
@given(videos(), st.integers(1, 12), st.data())
def test_vr_pixel_equality(video, t, data):
    px, line = video
    v = data.draw(st.integers(0, t - 1))
    chunks = ChunkSpec(t, v)
    src = ArraySource(list(px))
    for vr in iter_vr_chunks(src, line, chunks):
        assert vr.start_frame == vr.chunk_index * chunks.stride
        for r in range(vr.rows):
            expected = px[vr.start_frame + r, line.row_y, line.x_start:line.x_end]
            assert vr.pixels[r].tobytes() == expected.tobytes()


@settings(max_examples=40, deadline=None)
@given(videos(), st.integers(1, 12))
def test_concatenation_equals_whole_video(video, t):
    px, line = video
    src = ArraySource(list(px))
    parts = [vr.pixels for vr in iter_vr_chunks(src, line, ChunkSpec(t, 0))]
    whole = build_vr_chunk(src, line, ChunkSpec(len(px), 0), 0).pixels
    assert np.concatenate(parts).tobytes() == whole.tobytes()


@settings(max_examples=40, deadline=None)
@given(videos(), st.integers(2, 12), st.data())
def test_overlap_rows_repeat(video, t, data):
    px, line = video
    v = data.draw(st.integers(1, t - 1))
    vrs = list(iter_vr_chunks(ArraySource(list(px)), line, ChunkSpec(t, v)))
    for a, b in zip(vrs, vrs[1:]):
        if a.rows == t:
            k = min(v, b.rows)
            assert a.pixels[t - v:t - v + k].tobytes() == b.pixels[:k].tobytes()
