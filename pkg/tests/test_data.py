import numpy as np
import pytest

from robustdense import MultiModalTile, ValidationError, augment_rotate, load_manifest, synth_dataset, tile_raster
from robustdense.data import (
    SYNTH_NOISE_SIGMA,
    load_spectral_png,
    save_spectral_png,
    window_starts,
)
from .test_corruption import make_tile


class TestWindowStarts:
    def test_full_scale_arithmetic_yields_25_patches(self):
        # 6000 x 6000 raster with 1280 patches: 5 starts per axis, edge-aligned.
        starts = window_starts(6000, 1280, 1280)
        assert starts == [0, 1280, 2560, 3840, 4720]
        assert len(starts) ** 2 == 25

    def test_scaled_analog_600_128(self):
        starts = window_starts(600, 128, 128)
        assert starts == [0, 128, 256, 384, 472]
        assert len(starts) ** 2 == 25

    def test_exact_fit_single_window(self):
        assert window_starts(128, 128, 128) == [0]

    def test_patch_larger_than_raster_suggests_padding(self):
        with pytest.raises(ValidationError, match="pad"):
            window_starts(100, 128, 128)

    def test_against_window_enumeration_oracle(self):
        # Every pixel covered; no start beyond the edge-aligned final window.
        for size, patch, stride in [(600, 128, 128), (200, 64, 32), (97, 32, 32),
                                    (64, 64, 64), (65, 32, 7)]:
            starts = window_starts(size, patch, stride)
            covered = np.zeros(size, dtype=bool)
            for s in starts:
                assert 0 <= s <= size - patch
                covered[s:s + patch] = True
            assert covered.all()
            assert starts == sorted(set(starts))


class TestTileRaster:
    def test_identity_when_patch_equals_tile(self):
        tile = make_tile(64, 64)
        children = tile_raster(tile, 64, 64)
        assert len(children) == 1
        assert children[0].tile_id == "t#0,0"
        assert np.array_equal(children[0].spectral, tile.spectral)

    def test_every_pixel_covered(self):
        tile = make_tile(160, 96)
        children = tile_raster(tile, 64, 64)
        covered = np.zeros((160, 96), dtype=int)
        for child in children:
            r, c = map(int, child.tile_id.split("#")[1].split(","))
            covered[r:r + 64, c:c + 64] += 1
            assert np.array_equal(child.labels, tile.labels[r:r + 64, c:c + 64])
        assert (covered >= 1).all()

    def test_child_ids_carry_offsets(self):
        tile = make_tile(128, 128, tile_id="parent")
        ids = {c.tile_id for c in tile_raster(tile, 64, 64)}
        assert ids == {"parent#0,0", "parent#0,64", "parent#64,0", "parent#64,64"}


class TestRotation:
    def test_k0_is_identity(self):
        tile = make_tile(64, 64)
        out = augment_rotate(tile, 0)
        assert np.array_equal(out.labels, tile.labels)

    def test_four_rotations_compose_to_identity(self):
        tile = make_tile(64, 64, seed=3)
        out = tile
        for _ in range(4):
            out = augment_rotate(out, 1)
        assert np.array_equal(out.spectral, tile.spectral)
        assert np.array_equal(out.dsm, tile.dsm)
        assert np.array_equal(out.labels, tile.labels)

    def test_coordinate_oracle_for_quarter_turn(self):
        h = 32
        tile = make_tile(h, h, seed=4)
        out = augment_rotate(tile, 1)
        rng = np.random.default_rng(0)
        for _ in range(20):
            r, c = rng.integers(0, h, size=2)
            assert out.labels[c, h - 1 - r] == tile.labels[r, c]
            assert np.array_equal(out.spectral[:, c, h - 1 - r], tile.spectral[:, r, c])

    def test_modalities_rotate_together(self):
        tile = make_tile(64, 64, seed=5)
        out = augment_rotate(tile, 2)
        assert np.array_equal(out.labels, tile.labels[::-1, ::-1])
        assert np.array_equal(out.dsm[0], tile.dsm[0, ::-1, ::-1])

    def test_non_square_rejected(self):
        with pytest.raises(ValidationError):
            augment_rotate(make_tile(64, 32), 1)

    def test_bad_k_rejected(self):
        with pytest.raises(ValidationError):
            augment_rotate(make_tile(64, 64), 4)


class TestPngRoundTrip:
    def test_spectral_quantized_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        spectral = rng.uniform(size=(4, 32, 48)).astype(np.float32)
        path = tmp_path / "s.png"
        save_spectral_png(spectral, path)
        loaded = load_spectral_png(path)
        assert loaded.shape == spectral.shape
        # 16-bit quantization: half an LSB of 1/65535
        np.testing.assert_allclose(loaded, spectral, atol=0.5 / 65535)

    def test_channel_order_is_nir_r_g_b(self, tmp_path):
        spectral = np.zeros((4, 8, 8), dtype=np.float32)
        spectral[0] = 1.0  # NIR only
        path = tmp_path / "nir.png"
        save_spectral_png(spectral, path)
        loaded = load_spectral_png(path)
        assert loaded[0].min() == 1.0
        assert loaded[1:].max() == 0.0

    def test_tile_roundtrip_via_manifest(self, tmp_path):
        manifest = synth_dataset(2, 64, 0, tmp_path, val_fraction=0, test_fraction=0)
        reloaded = load_manifest(tmp_path / "manifest.json")
        for rec_a, rec_b in zip(manifest.records, reloaded.records):
            ta = manifest.load_tile(rec_a)
            tb = reloaded.load_tile(rec_b)
            assert np.array_equal(ta.labels, tb.labels)
            assert np.array_equal(ta.spectral, tb.spectral)
            assert np.array_equal(ta.dsm, tb.dsm)


class TestManifest:
    def test_missing_raster_rejected(self, tmp_path):
        synth_dataset(2, 64, 0, tmp_path, val_fraction=0, test_fraction=0)
        (tmp_path / "synth000_dsm.png").unlink()
        with pytest.raises(ValidationError, match="missing raster"):
            load_manifest(tmp_path / "manifest.json")

    def test_splits_are_disjoint_and_complete(self, tmp_path):
        manifest = synth_dataset(16, 64, 1, tmp_path)
        ids = [r.tile_id for r in manifest.records]
        assert len(set(ids)) == len(ids)
        by_split = {s: {r.tile_id for r in manifest.split(s)} for s in ("train", "val", "test")}
        assert by_split["train"] and by_split["val"] and by_split["test"]
        assert not (by_split["train"] & by_split["val"])
        assert not (by_split["train"] & by_split["test"])
        assert set(ids) == by_split["train"] | by_split["val"] | by_split["test"]


class TestSynthDataset:
    def test_deterministic_in_seed(self, tmp_path):
        a = synth_dataset(3, 64, 5, tmp_path / "a")
        b = synth_dataset(3, 64, 5, tmp_path / "b")
        for ra, rb in zip(a.records, b.records):
            ta, tb = a.load_tile(ra), b.load_tile(rb)
            assert np.array_equal(ta.spectral, tb.spectral)
            assert np.array_equal(ta.dsm, tb.dsm)
            assert np.array_equal(ta.labels, tb.labels)

    @pytest.mark.parametrize("seed", range(20))
    def test_all_classes_present(self, tmp_path, seed):
        manifest = synth_dataset(8, 128, seed, tmp_path / f"s{seed}")
        hist = np.zeros(6, dtype=np.int64)
        for record in manifest.records:
            tile = manifest.load_tile(record)
            hist += np.bincount(tile.labels.ravel(), minlength=6)
        assert (hist > 0).all()

    def test_class_means_separated_beyond_noise(self, tmp_path):
        # Statistics oracle: empirical class means must sit >= 3 sigma apart.
        manifest = synth_dataset(4, 128, 9, tmp_path, val_fraction=0, test_fraction=0)
        sums = np.zeros((6, 4))
        sq_sums = np.zeros((6, 4))
        counts = np.zeros(6)
        for record in manifest.records:
            tile = manifest.load_tile(record)
            for k in range(6):
                sel = tile.labels == k
                if sel.any():
                    sums[k] += tile.spectral[:, sel].sum(axis=1)
                    sq_sums[k] += (tile.spectral[:, sel] ** 2).sum(axis=1)
                    counts[k] += sel.sum()
        assert (counts > 0).all()
        means = sums / counts[:, None]
        var = sq_sums / counts[:, None] - means**2
        sigma = float(np.sqrt(var.max()))
        min_dist = min(
            np.linalg.norm(means[i] - means[j])
            for i in range(6) for j in range(i + 1, 6)
        )
        assert sigma <= 2 * SYNTH_NOISE_SIGMA  # PNG quantization adds nothing visible
        assert min_dist >= 3 * sigma

    def test_dsm_correlates_with_elevated_classes(self, tmp_path):
        manifest = synth_dataset(4, 128, 2, tmp_path, val_fraction=0, test_fraction=0)
        tile = manifest.load_tile(manifest.records[0])
        building = tile.dsm[0][tile.labels == 1]
        clutter = tile.dsm[0][tile.labels == 5]
        if building.size and clutter.size:
            assert building.mean() > clutter.mean()

    def test_invalid_size_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            synth_dataset(2, 100, 0, tmp_path)


def test_tile_validation_catches_misregistration():
    tile = MultiModalTile(
        spectral=np.zeros((4, 32, 32), dtype=np.float32),
        dsm=np.zeros((1, 16, 32), dtype=np.float32),
        labels=np.zeros((32, 32), dtype=np.uint8),
        tile_id="bad",
    )
    with pytest.raises(ValidationError, match="co-registered"):
        tile.validate()
