import json

import numpy as np
import pytest

from deoverlap.errors import CorruptDataError, ManifestSchemaError
from deoverlap.manifest import (
    DatasetManifest,
    ManifestImage,
    ManifestInstance,
    load_manifest,
    parse_manifest,
    save_manifest,
)
from deoverlap.masks import rle_encode


def write(tmp_path, data, name="m.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def instance_dict(**overrides):
    base = {"id": 1, "class": "cytoplasm", "rle": [0, 4]}
    base.update(overrides)
    return base


def image_dict(**overrides):
    base = {"image_id": "im0", "width": 2, "height": 2, "instances": [instance_dict()]}
    base.update(overrides)
    return base


class TestLoad:
    def test_empty_dataset(self, tmp_path):
        m = load_manifest(write(tmp_path, {"version": "1", "images": []}))
        assert m.version == "1" and m.images == []

    def test_full_mask_instance(self, tmp_path):
        m = load_manifest(write(tmp_path, {"version": "1", "images": [image_dict()]}))
        ann = m.images[0].to_annotation()
        assert ann.instances[0].mask.all()
        assert ann.instances[0].bbox.as_list() == [0, 0, 2, 2]

    def test_not_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope", encoding="utf-8")
        with pytest.raises(ManifestSchemaError):
            load_manifest(path)

    @pytest.mark.parametrize(
        "mutate, expected_path",
        [
            (lambda d: d.pop("version"), "$.version"),
            (lambda d: d.update(images="nope"), "$.images"),
            (lambda d: d["images"][0].pop("width"), "$.images[0].width"),
            (lambda d: d["images"][0]["instances"][0].pop("class"), "instances[0].class"),
            (lambda d: d["images"][0]["instances"][0].update({"class": "bacteria"}), "class"),
            (lambda d: d["images"][0]["instances"][0].update({"score": 1.5}), "score"),
            (lambda d: d["images"][0]["instances"][0].update({"bogus": 1}), "bogus"),
            (lambda d: d["images"][0]["instances"][0].update({"bbox": [0, 0, 5, 5]}), "bbox"),
        ],
    )
    def test_schema_errors_name_json_path(self, tmp_path, mutate, expected_path):
        data = {"version": "1", "images": [image_dict()]}
        mutate(data)
        with pytest.raises(ManifestSchemaError) as err:
            load_manifest(write(tmp_path, data))
        assert expected_path in str(err.value)

    def test_rle_sum_mismatch_names_instance(self, tmp_path):
        data = {"version": "1", "images": [image_dict(instances=[instance_dict(rle=[0, 3])])]}
        with pytest.raises(CorruptDataError) as err:
            load_manifest(write(tmp_path, data))
        assert "instance 1" in str(err.value)
        assert not isinstance(err.value, ManifestSchemaError)

    def test_duplicate_instance_ids_rejected(self, tmp_path):
        data = {
            "version": "1",
            "images": [image_dict(instances=[instance_dict(), instance_dict()])],
        }
        with pytest.raises(ManifestSchemaError):
            load_manifest(write(tmp_path, data))

    def test_duplicate_image_ids_rejected(self, tmp_path):
        data = {"version": "1", "images": [image_dict(), image_dict()]}
        with pytest.raises(ManifestSchemaError):
            load_manifest(write(tmp_path, data))

    def test_loose_bbox_rejected(self, tmp_path):
        # Mask occupies one pixel but the declared box covers the image.
        inst = instance_dict(rle=[0, 1, 3], bbox=[0, 0, 2, 2])
        data = {"version": "1", "images": [image_dict(instances=[inst])]}
        with pytest.raises(CorruptDataError) as err:
            load_manifest(write(tmp_path, data))
        assert "tight" in str(err.value)

    def test_empty_mask_rejected(self, tmp_path):
        data = {"version": "1", "images": [image_dict(instances=[instance_dict(rle=[4])])]}
        with pytest.raises(CorruptDataError):
            load_manifest(write(tmp_path, data))

    def test_grid_only_instance_without_rle(self, tmp_path):
        inst = {"id": 1, "class": "cytoplasm", "intersection_png": "o.png",
                "complement_png": "m.png", "bbox": [0, 0, 2, 2]}
        data = {"version": "1", "images": [image_dict(instances=[inst])]}
        m = load_manifest(write(tmp_path, data))
        assert m.images[0].instances[0].rle is None


def random_manifest(rng, n_images=3):
    images = []
    for i in range(n_images):
        w = int(rng.integers(2, 10))
        h = int(rng.integers(2, 10))
        instances = []
        for j in range(int(rng.integers(0, 4))):
            mask = rng.random((h, w)) < 0.5
            if not mask.any():
                mask[0, 0] = True
            ys, xs = np.nonzero(mask)
            instances.append(
                ManifestInstance(
                    id=j + 1,
                    cell_class="nuclei" if rng.random() < 0.5 else "cytoplasm",
                    rle=rle_encode(mask),
                    bbox=[int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1],
                    score=float(np.round(rng.random(), 6)) if rng.random() < 0.5 else None,
                )
            )
        images.append(
            ManifestImage(
                image_id=f"im-{i}",
                width=w,
                height=h,
                file_path=f"im-{i}.png" if rng.random() < 0.5 else None,
                instances=instances,
            )
        )
    return DatasetManifest(version="1", images=images)


class TestRoundTrip:
    def test_fifty_random_manifests(self, tmp_path):
        rng = np.random.default_rng(77)
        for k in range(50):
            manifest = random_manifest(rng)
            path = tmp_path / f"m{k}.json"
            save_manifest(manifest, path)
            assert load_manifest(path) == manifest

    def test_save_is_canonical(self, tmp_path):
        manifest = random_manifest(np.random.default_rng(5))
        p1 = tmp_path / "a.json"
        p2 = tmp_path / "b.json"
        save_manifest(manifest, p1)
        save_manifest(load_manifest(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_integers_stay_integers(self, tmp_path):
        manifest = DatasetManifest(version="1", images=[ManifestImage("a", 2, 2, None, [
            ManifestInstance(id=1, cell_class="nuclei", rle=[0, 4], bbox=[0, 0, 2, 2])
        ])])
        path = tmp_path / "m.json"
        save_manifest(manifest, path)
        text = path.read_text()
        assert '"rle"' in text and '"width": 2' in text
        assert "4.0" not in text and "2.0" not in text


class TestParse:
    def test_unknown_top_level_key(self):
        with pytest.raises(ManifestSchemaError):
            parse_manifest({"version": "1", "images": [], "extra": 1})

    def test_bool_not_accepted_as_int(self):
        with pytest.raises(ManifestSchemaError):
            parse_manifest({"version": "1", "images": [image_dict(width=True)]})
