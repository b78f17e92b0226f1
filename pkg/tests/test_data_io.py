"""
Tests for synthetic scenarios, file formats and SVG output (misre.data).

Covers:
  1. Scenario generation: counts, labels, noise, determinism, validation.
  2. Presets.
  3. CSV/PLY readers, covariance files, writers.
  4. Result and scenario files.
  5. SVG overlays.
"""

from pathlib import Path

import numpy as np
import pytest

from misre.core.errors import InvalidInputError, ParseError
from misre.data import io as data_io
from misre.data.synth import OUTLIER, PRESETS, generate, planted_fundamental, preset
from misre.estimation import EstimationConfig, run
from misre.schemas.results import ResultDocument, StructureReport
from misre.schemas.scenario import PlantedModel, ScenarioSpec

SAMPLES = Path(__file__).resolve().parents[1] / "misre" / "data" / "samples"


def _spec(planted, model_id="line2d", region=(700, 700), n_out=0, seed=0):
    return ScenarioSpec(model_id=model_id, region=list(region), planted=planted, n_out=n_out, seed=seed)


# ===== 1. generation =====


class TestGenerate:
    def test_noiseless_line_is_exact(self):
        pm = PlantedModel(kind="line", n_in=50, sigma=0.0, params={"p0": [10, 20], "p1": [110, 70]})
        ds = generate(_spec([pm]))
        # y = 0.5 x + 15
        assert np.allclose(ds.points[:, 1], 0.5 * ds.points[:, 0] + 15.0)
        assert ds.populations() == {0: 50}

    def test_labels_and_sizes(self):
        ds = generate(preset("five-lines", seed=7))
        assert len(ds) == 1350
        assert ds.populations() == {OUTLIER: 350, 0: 300, 1: 250, 2: 200, 3: 150, 4: 100}

    def test_same_seed_same_points(self):
        a = generate(preset("three-ellipses", seed=3))
        b = generate(preset("three-ellipses", seed=3))
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.labels, b.labels)

    def test_different_seed_different_points(self):
        a = generate(preset("three-ellipses", seed=3))
        b = generate(preset("three-ellipses", seed=4))
        assert not np.array_equal(a.points, b.points)

    def test_circle_noise_is_radial(self):
        pm = PlantedModel(kind="circle", n_in=10_000, sigma=0.01, params={"center": [0.5, 0.5], "radius": 0.2})
        spec = ScenarioSpec(model_id="ellipse2d", region=[1.0, 1.0], planted=[pm], n_out=0, seed=1)
        pts = generate(spec).points
        residual = np.linalg.norm(pts - 0.5, axis=1) - 0.2
        assert residual.std() == pytest.approx(0.01, rel=0.05)

    def test_outliers_stay_in_the_region(self):
        ds = generate(preset("planes-3d", seed=0))
        out = ds.points[ds.members(OUTLIER)]
        assert out.min() >= 0 and out.max() <= 10

    def test_correspondence_outliers_cover_both_images(self):
        ds = generate(preset("homography-pair", seed=0))
        assert ds.points.shape[1] == 4
        assert ds.members(OUTLIER).size == 150

    def test_fundamental_pairs_satisfy_the_planted_relation(self):
        pm = PlantedModel(kind="fundamental", n_in=30, sigma=0.0,
                          params={"rotation_deg": [0, 5, 0], "translation": [1.0, 0.0, 0.1], "depth": [5, 15]})
        ds = generate(_spec([pm], model_id="fundamental"))
        f = planted_fundamental(pm, [700, 700])
        x1 = np.column_stack([ds.points[:, :2], np.ones(30)])
        x2 = np.column_stack([ds.points[:, 2:], np.ones(30)])
        res = np.einsum("ni,ij,nj->n", x2, f, x1) / (np.linalg.norm(x1, axis=1) * np.linalg.norm(x2, axis=1))
        assert np.abs(res).max() < 1e-9

    def test_kind_must_match_the_model(self):
        pm = PlantedModel(kind="circle", n_in=10, params={"center": [300, 300], "radius": 50})
        with pytest.raises(InvalidInputError):
            generate(_spec([pm], model_id="line2d"))

    def test_locus_outside_the_region(self):
        pm = PlantedModel(kind="line", n_in=10, params={"p0": [0, 0], "p1": [900, 10]})
        with pytest.raises(InvalidInputError):
            generate(_spec([pm]))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            PlantedModel(kind="torus", n_in=5)


# ===== 2. presets =====


class TestPresets:
    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_every_preset_generates(self, name):
        spec = preset(name, seed=1)
        ds = generate(spec)
        assert len(ds) == spec.n_points

    def test_three_ellipses(self):
        assert preset("three-ellipses").n_points == 1100

    def test_contract_aliases(self):
        assert preset("two-ellipses-fig3").n_points == 600
        assert preset("two-ellipses-fig3", seed=2) == preset("two-ellipses", seed=2)
        assert preset("circle-limit-fig5").planted[0].params["radius"] == 50

    def test_sigma_override(self):
        assert preset("single-line", sigma=9.0).planted[0].sigma == 9.0

    def test_unknown(self):
        with pytest.raises(InvalidInputError):
            preset("six-lines")


# ===== 3. readers and writers =====


class TestReaders:
    def test_two_rows(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("1.5,2.0\n3.0,4.0\n")
        assert np.array_equal(data_io.read_points(path, 2), [[1.5, 2.0], [3.0, 4.0]])

    def test_header_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("x,y\n# note\n\n1,2\n3,4\n")
        assert data_io.read_points(path, 2).shape == (2, 2)

    def test_bad_value(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("1,2\n3,abc\n")
        with pytest.raises(ParseError) as exc:
            data_io.read_points(path, 2)
        assert exc.value.line == 2

    def test_non_finite(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("1,2\nnan,4\n")
        with pytest.raises(ParseError):
            data_io.read_points(path, 2)

    def test_wrong_column_count(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("1,2,3\n")
        with pytest.raises(InvalidInputError):
            data_io.read_points(path, 2)

    def test_round_trip_is_bit_identical(self, tmp_path):
        ds = generate(preset("two-ellipses", seed=5))
        path = tmp_path / "pts.csv"
        data_io.write_points(path, ds.points)
        assert np.array_equal(data_io.read_points(path, 2), ds.points)

    def test_labels(self, tmp_path):
        path = tmp_path / "labels.csv"
        data_io.write_labels(path, np.array([0, -1, 2]))
        assert path.read_text().splitlines()[0] == "label"
        assert list(data_io.read_labels(path)) == [0, -1, 2]

    def test_bundled_correspondences(self):
        pts = data_io.read_correspondences(SAMPLES / "two_plane_pairs.csv")
        assert pts.shape == (280, 4)

    def test_ply(self, tmp_path):
        pytest.importorskip("open3d")
        path = tmp_path / "tri.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
            "end_header\n0 0 0\n1 0 0\n0 1 2\n"
        )
        assert np.allclose(data_io.read_points(path, 3), [[0, 0, 0], [1, 0, 0], [0, 1, 2]])

    def test_bundled_ply(self):
        pytest.importorskip("open3d")
        assert data_io.read_points(SAMPLES / "two_planes.ply", 3).shape == (336, 3)

    def test_ply_needs_three_dimensions(self):
        with pytest.raises(InvalidInputError):
            data_io.read_points(SAMPLES / "two_planes.ply", 2)


class TestCovariances:
    def test_shared_row_is_rescaled(self, tmp_path):
        path = tmp_path / "cov.csv"
        path.write_text("4,0,0,1\n")
        cov = data_io.read_covariances(path, 2, 3)
        assert cov.shape == (3, 2, 2)
        assert np.allclose(cov[0], np.diag([2.0, 0.5]))

    def test_row_count(self, tmp_path):
        path = tmp_path / "cov.csv"
        path.write_text("1,0,0,1\n1,0,0,1\n")
        with pytest.raises(InvalidInputError):
            data_io.read_covariances(path, 2, 3)

    def test_asymmetric(self, tmp_path):
        path = tmp_path / "cov.csv"
        path.write_text("1,0.5,0,1\n")
        with pytest.raises(InvalidInputError):
            data_io.read_covariances(path, 2, 1)


# ===== 4. result and scenario files =====


class TestDocuments:
    def test_empty_structure_list(self, tmp_path):
        doc = ResultDocument(model_id="line2d", n_points=3, residual_indices=[0, 1, 2])
        path = tmp_path / "r.json"
        data_io.write_result(doc, path)
        back = data_io.read_result(path)
        assert back.structures == []
        assert back.residual_indices == [0, 1, 2]

    def test_fit_result_round_trip(self, tmp_path):
        t = np.arange(30.0)
        result = run(np.column_stack([t, 2 * t + 1]), EstimationConfig("line2d", trials=20))
        path = tmp_path / "r.json"
        data_io.write_result(result.to_document(), path)
        back = data_io.read_result(path)
        s = back.structures[0]
        assert (s.scale, s.n_in) == (result.structures[0].scale, 30)
        assert s.strength == result.structures[0].strength

    def test_scenario_yaml(self, tmp_path):
        spec = preset("three-ellipses", seed=4)
        path = tmp_path / "s.yaml"
        data_io.write_scenario(spec, path)
        assert data_io.load_scenario(path) == spec

    def test_scenario_json(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(preset("single-line").model_dump_json())
        assert data_io.load_scenario(path).name == "single-line"

    def test_invalid_scenario(self, tmp_path):
        path = tmp_path / "s.yaml"
        path.write_text("model_id: line2d\nregion: [700]\n")
        with pytest.raises(InvalidInputError):
            data_io.load_scenario(path)

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "s.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(InvalidInputError):
            data_io.load_scenario(path)


# ===== 5. SVG =====


def _report(rank, indices):
    return StructureReport(
        rank=rank, model_id="line2d", strength=1.0, scale=1.0, scale_estimate=1.0,
        n_in=len(indices), theta=[0.0, 1.0], alpha=0.0, inlier_indices=indices,
    )


class TestSvg:
    def test_view_box_and_groups(self, tmp_path):
        pytest.importorskip("matplotlib")
        from misre.data.svg import render_svg

        pts = np.random.default_rng(0).uniform(0, 700, (40, 2))
        path = tmp_path / "scene.svg"
        render_svg(pts, [_report(1, list(range(10))), _report(2, list(range(10, 20)))], path, region=[700, 700])
        text = path.read_text()
        assert 'viewBox="0 0 700 700"' in text
        assert 'id="structure-1"' in text and 'id="structure-2"' in text
        assert 'id="residual"' in text

    def test_top_k_hides_weaker_structures(self, tmp_path):
        pytest.importorskip("matplotlib")
        from misre.data.svg import render_svg

        pts = np.random.default_rng(0).uniform(0, 700, (40, 2))
        path = tmp_path / "scene.svg"
        render_svg(pts, [_report(1, [0, 1]), _report(2, [2, 3])], path, region=[700, 700], top_k=1)
        assert 'id="structure-2"' not in path.read_text()

    def test_three_projections_for_clouds(self, tmp_path):
        pytest.importorskip("matplotlib")
        from misre.data.svg import render_svg

        pts = np.random.default_rng(0).uniform(0, 10, (30, 3))
        path = tmp_path / "cloud.svg"
        render_svg(pts, [_report(1, [0, 1, 2])], path)
        text = path.read_text()
        for name in ("xy", "xz", "yz"):
            assert f'id="projection-{name}"' in text
