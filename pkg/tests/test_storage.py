import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sca.data import synthetic_images, to_uint8
from sca.net import NetworkConfig
from sca.pipeline import reconstruct, share
from sca.protocol import extract_support
from sca.storage import (
    KeyFile,
    PublicStore,
    RunConfig,
    decode_pnm,
    encode_pnm,
    format_config,
    load_image_dir,
    parse_config,
    read_image,
    write_image,
)

from test_protocol import random_codes, simple_noise
from sca.protocol import ambiguate


def _store_and_keys(n=5, k_n=8, seed=0):
    rng = np.random.default_rng(seed)
    store, keys = PublicStore(4, 64, 8 + k_n), KeyFile(4, 64, 8)
    for i in range(n):
        z = random_codes(rng, item_id=f"item-{i}-é")
        store.add(ambiguate(z, simple_noise(), k_n, 1))
        keys.add(extract_support(z))
    return store, keys


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 6), st.integers(0, 56), st.integers(0, 1000))
def test_public_store_round_trip_bitwise(n, k_n, seed):
    store, _ = _store_and_keys(n, k_n, seed)
    raw = store.to_bytes()
    back = PublicStore.read(io.BytesIO(raw))
    assert back.to_bytes() == raw
    for item_id, rec in store.records.items():
        assert back[item_id].values.tobytes() == rec.values.tobytes()
        np.testing.assert_array_equal(back[item_id].indices, rec.indices)


def test_public_store_layout():
    store, _ = _store_and_keys(n=1)
    raw = store.to_bytes()
    assert raw[:4] == b"SCAP"
    assert struct.unpack("<BHIII", raw[4:19]) == (1, 4, 64, 16, 1)
    (idlen,) = struct.unpack("<I", raw[19:23])
    body = raw[23 + idlen :]
    assert len(body) == 4 * 16 * 6
    first_idx, first_val = struct.unpack("<Hf", body[:6])
    rec = next(iter(store.records.values()))
    assert first_idx == rec.indices[0, 0] and np.float32(first_val) == rec.values[0, 0]


def test_key_file_round_trip_and_no_values(tmp_path):
    _, keys = _store_and_keys(n=3)
    raw = keys.to_bytes()
    assert raw[:4] == b"SCAK"
    ids_bytes = sum(4 + len(i.encode()) for i in keys.records)
    # header + ids + u16 indices, nothing else: no value payload
    assert len(raw) == 19 + ids_bytes + 3 * 4 * 8 * 2
    keys.save(tmp_path / "k.bin")
    back = KeyFile.load(tmp_path / "k.bin")
    assert back.to_bytes() == raw


def test_store_rejects_duplicates_and_truncation():
    store, _ = _store_and_keys(n=1)
    with pytest.raises(ValueError):
        store.add(next(iter(store.records.values())))
    with pytest.raises(EOFError):
        PublicStore.read(io.BytesIO(store.to_bytes()[:-3]))
    with pytest.raises(ValueError):
        KeyFile.read(io.BytesIO(store.to_bytes()))
    with pytest.raises(KeyError):
        store["missing"]


def test_config_round_trip_and_comments():
    cfg = RunConfig(network=NetworkConfig.desk(), epochs=3, lr=0.002, k_n=4)
    text = format_config(cfg)
    assert parse_config(text) == cfg
    parsed = parse_config("# desk\nepochs = 5  # short\nm = 32\nk=4\n\n")
    assert parsed.epochs == 5 and parsed.network.m == 32 and parsed.network.k == 4
    with pytest.raises(ValueError, match="line 1"):
        parse_config("bogus = 1")
    with pytest.raises(ValueError):
        parse_config("epochs 5")


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([1, 3]), st.integers(1, 9), st.integers(1, 9), st.integers(0, 1000))
def test_pnm_round_trip(c, h, w, seed):
    img = np.random.default_rng(seed).integers(0, 256, size=(c, h, w), dtype=np.uint8)
    raw = encode_pnm(img)
    assert raw[:2] == (b"P5" if c == 1 else b"P6")
    back = decode_pnm(raw)
    np.testing.assert_array_equal(back, img)
    assert encode_pnm(back) == raw


def test_pnm_header_comments_and_maxval():
    raw = b"P5 # comment\n2 1\n# another\n15\n\x00\x0f"
    np.testing.assert_array_equal(decode_pnm(raw), [[[0, 255]]])
    with pytest.raises(ValueError):
        decode_pnm(b"P2\n1 1\n255\n0")


def test_image_dir_skips_bad_files(tmp_path, caplog):
    imgs = synthetic_images(3, size=8, seed=1)
    for i, img in enumerate(imgs):
        write_image(tmp_path / f"im{i}.pgm", img)
    (tmp_path / "broken.pgm").write_bytes(b"P5\n8 8\n255\n")
    write_image(tmp_path / "big.pgm", np.zeros((1, 16, 16)))
    (tmp_path / "notes.txt").write_text("ignored")
    items = load_image_dir(tmp_path, (1, 8, 8))
    assert [i for i, _ in items] == ["im0", "im1", "im2"]
    np.testing.assert_array_equal(items[0][1], imgs[0])
    assert "broken" in caplog.text and "big" in caplog.text
    assert np.array_equal(to_uint8(read_image(tmp_path / "im1.pgm")), to_uint8(imgs[1]))


def test_share_then_authorized_decode_equals_direct(tiny_net, tmp_path):
    imgs = synthetic_images(6, size=8, seed=3)
    items = [(f"p{i}", img) for i, img in enumerate(imgs)]
    store, keys, codes = share(tiny_net, items, k_n=2, seed=9)
    store.save(tmp_path / "pub.scap")
    keys.save(tmp_path / "keys.scak")
    store = PublicStore.load(tmp_path / "pub.scap")
    keys = KeyFile.load(tmp_path / "keys.scak")
    assert len(store) == 6 and store.k_prime == 4
    for (item_id, img), c in zip(items, codes):
        assert np.all(c.nonzero_counts() <= 2)
        direct = tiny_net.decode(tiny_net.encode(img, item_id))
        assert reconstruct(tiny_net, store, item_id, keys).tobytes() == direct.tobytes()


def test_share_k_n_zero_publishes_plain_codes(tiny_net):
    imgs = synthetic_images(3, size=8, seed=4)
    store, keys, codes = share(tiny_net, [(f"q{i}", x) for i, x in enumerate(imgs)], k_n=0)
    for c in codes:
        np.testing.assert_array_equal(store[c.item_id].to_dense(), c.values)
