import csv
import json

import numpy as np
import pytest

from cdil.cli import main as cli_main
from cdil.core import DataLoadError
from cdil.interface import (format_report_table, load_manifest, load_report,
                            load_sequence, reaggregate_trials, write_report,
                            write_stream)
from cdil.metrics import TrialResult, aggregate
from cdil.synth import SynthSpec, generate_stream


def write_feature_csv(path, dim, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "subject_id", "label"] + [f"f{i}" for i in range(dim)])
        for row in rows:
            writer.writerow(row)


def write_manifest(path, sessions, dim=2, shared_subjects=False, name="toy"):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"name": name, "feature_dim": dim,
                   "shared_subjects": shared_subjects, "sessions": sessions}, fh)


@pytest.fixture()
def toy_dataset(tmp_path):
    write_feature_csv(tmp_path / "s1.csv", 2, [
        ["a1", "p1", "calm", "0.5", "1.5"],
        ["a2", "p1", "tense", "-1.0", "2.0"],
        ["a3", "p2", "calm", "0.25", "0.125"],
    ])
    write_feature_csv(tmp_path / "s2.csv", 2, [
        ["b1", "p1", "tense", "3.0", "4.0"],
        ["b2", "p3", "alert", "5.0", "6.0"],
    ])
    manifest_path = tmp_path / "manifest.json"
    write_manifest(manifest_path, [
        {"name": "first", "year": 2014, "label_names": ["calm", "tense"],
         "features_path": "s1.csv"},
        {"name": "second", "label_names": ["tense", "alert"], "features_path": "s2.csv"},
    ])
    return manifest_path


class TestLoadManifest:
    def test_registry_in_first_appearance_order(self, toy_dataset):
        manifest = load_manifest(toy_dataset)
        assert manifest.registry().names == ("calm", "tense", "alert")
        assert manifest.feature_dim == 2
        assert manifest.sessions[0].year == 2014
        assert manifest.sessions[1].year is None

    def test_default_stream_manifest_registry_size(self, tmp_path):
        seq = generate_stream(SynthSpec(seed=4, samples_per_class_per_session=2,
                                        subjects_per_session=7))
        manifest = load_manifest(write_stream(seq, tmp_path / "stream"))
        assert len(manifest.registry()) == 9
        loaded = load_sequence(manifest)
        assert [len(loaded.cumulative_label_space(t)) for t in range(1, 5)] == [5, 7, 9, 9]

    def test_single_session_manifest_valid(self, tmp_path):
        write_feature_csv(tmp_path / "only.csv", 1, [["x", "p", "solo", "1.0"]])
        path = tmp_path / "m.json"
        write_manifest(path, [{"name": "only", "label_names": ["solo"],
                               "features_path": "only.csv"}], dim=1)
        assert load_manifest(path).sessions[0].name == "only"

    def test_missing_field_named(self, tmp_path):
        path = tmp_path / "m.json"
        write_manifest(path, [{"label_names": ["a"], "features_path": "x.csv"}])
        with pytest.raises(DataLoadError, match="sessions\\[1\\].name"):
            load_manifest(path)

    def test_duplicate_session_names_rejected(self, tmp_path):
        write_feature_csv(tmp_path / "s.csv", 2, [["x", "p", "a", "1", "2"]])
        path = tmp_path / "m.json"
        write_manifest(path, [
            {"name": "dup", "label_names": ["a"], "features_path": "s.csv"},
            {"name": "dup", "label_names": ["a"], "features_path": "s.csv"},
        ])
        with pytest.raises(DataLoadError, match="duplicate session name"):
            load_manifest(path)

    def test_unreadable_feature_path_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        write_manifest(path, [{"name": "x", "label_names": ["a"],
                               "features_path": "missing.csv"}])
        with pytest.raises(DataLoadError, match="features_path"):
            load_manifest(path)


class TestLoadSessionFeatures:
    def test_dimension_mismatch_names_the_file(self, tmp_path):
        write_feature_csv(tmp_path / "bad.csv", 3, [["x", "p", "a", "1", "2", "3"]])
        path = tmp_path / "m.json"
        write_manifest(path, [{"name": "bad", "label_names": ["a"],
                               "features_path": "bad.csv"}], dim=2)
        manifest = load_manifest(path)
        with pytest.raises(DataLoadError, match="header"):
            load_sequence(manifest)

    def test_min_samples_filter_drops_small_class(self, tmp_path, caplog):
        rows = ([[f"c{i}", f"p{i % 3}", "common", "1.0", "2.0"] for i in range(12)]
                + [[f"r{i}", "p9", "rare", "0.0", "0.0"] for i in range(9)])
        write_feature_csv(tmp_path / "s.csv", 2, rows)
        path = tmp_path / "m.json"
        write_manifest(path, [{"name": "s", "label_names": ["common", "rare"],
                               "features_path": "s.csv", "min_samples_per_class": 10}])
        manifest = load_manifest(path)
        seq = load_sequence(manifest)
        session = seq.session(1)
        assert {seq.registry.name_of(c) for c in session.label_set} == {"common"}
        assert session.size == 12

    def test_min_zero_drops_nothing(self, tmp_path):
        rows = [["x1", "p", "a", "1.0", "2.0"], ["x2", "p", "b", "3.0", "4.0"]]
        write_feature_csv(tmp_path / "s.csv", 2, rows)
        path = tmp_path / "m.json"
        write_manifest(path, [{"name": "s", "label_names": ["a", "b"],
                               "features_path": "s.csv", "min_samples_per_class": 0}])
        session = load_sequence(load_manifest(path)).session(1)
        assert session.size == 2
        assert len(session.label_set) == 2

    def test_loader_errors_carry_line_numbers(self, tmp_path):
        write_feature_csv(tmp_path / "s.csv", 2, [
            ["x1", "p", "a", "1.0", "2.0"],
            ["x2", "p", "a", "oops", "2.0"],
        ])
        path = tmp_path / "m.json"
        write_manifest(path, [{"name": "s", "label_names": ["a"],
                               "features_path": "s.csv"}])
        with pytest.raises(DataLoadError, match="line 3"):
            load_sequence(load_manifest(path))

    def test_unknown_label_rejected_with_line(self, tmp_path):
        write_feature_csv(tmp_path / "s.csv", 2, [["x1", "p", "undeclared", "1", "2"]])
        path = tmp_path / "m.json"
        write_manifest(path, [{"name": "s", "label_names": ["a"],
                               "features_path": "s.csv"}])
        with pytest.raises(DataLoadError, match="line 2.*label"):
            load_sequence(load_manifest(path))

    def test_duplicate_sample_id_rejected(self, tmp_path):
        write_feature_csv(tmp_path / "s.csv", 2, [
            ["x1", "p", "a", "1", "2"], ["x1", "p", "a", "3", "4"]])
        path = tmp_path / "m.json"
        write_manifest(path, [{"name": "s", "label_names": ["a"],
                               "features_path": "s.csv"}])
        with pytest.raises(DataLoadError, match="duplicate sample_id"):
            load_sequence(load_manifest(path))

    def test_subject_namespacing_default_on(self, toy_dataset):
        seq = load_sequence(toy_dataset)
        assert {s.subject_id for s in seq.session(1).samples} == {"s1:p1", "s1:p2"}
        assert {s.subject_id for s in seq.session(2).samples} == {"s2:p1", "s2:p3"}


class TestStreamRoundTrip:
    @pytest.mark.parametrize("label_sets", [
        (("a", "b"), ("b", "c")),
        (("zebra", "apple"), ("apple", "mid", "aardvark")),  # non-alphabetical order
    ])
    def test_write_then_load_is_exact(self, tmp_path, label_sets):
        seq = generate_stream(SynthSpec(
            session_label_sets=label_sets, feature_dim=5,
            samples_per_class_per_session=6, subjects_per_session=4, seed=31))
        loaded = load_sequence(write_stream(seq, tmp_path / "stream"))
        assert loaded.feature_dim == seq.feature_dim
        assert loaded.n == seq.n
        assert loaded.registry.names == seq.registry.names
        for orig, back in zip(seq.sessions, loaded.sessions):
            assert back.label_set == orig.label_set
            assert back.subjects == orig.subjects
            for a, b in zip(orig.samples, back.samples):
                assert (a.sample_id, a.subject_id, a.label) == (b.sample_id, b.subject_id, b.label)
                assert np.array_equal(a.features, b.features)


class TestReports:
    def make_report(self):
        trials = [TrialResult(trial_index=i, correct=(3 + i, 40), total=(10, 50))
                  for i in (1, 2, 3)]
        return aggregate(trials, config={"protocol": "slcv",
                                         "learner": {"variant": "prototype"}})

    def test_json_round_trip_is_exact(self, tmp_path):
        report = self.make_report()
        path = write_report(report, tmp_path / "run")
        assert load_report(path) == report

    def test_human_table_columns(self, tmp_path):
        seq_report = aggregate([TrialResult(1, (1, 2, 3, 4), (10, 10, 10, 10))],
                               config={"protocol": "ilcv",
                                       "learner": {"variant": "finetune"}})
        table = format_report_table(seq_report)
        for column in ("Session 1", "Session 2", "Session 3", "Session 4", "Ā", "Ã"):
            assert column in table
        assert "10.00" in table and "40.00" in table  # percent, two decimals

    def test_reaggregation_from_trial_files(self, tmp_path):
        report = self.make_report()
        write_report(report, tmp_path / "run")
        again = reaggregate_trials(tmp_path / "run")
        assert again.mean_per_session == report.mean_per_session
        assert again.mean_final == report.mean_final
        assert again.trials == report.trials


class TestCli:
    def run_config(self, tmp_path, **extra):
        config = {
            "protocol": "ilcv",
            "k": 3,
            "seed": 5,
            "learner": {"variant": "prototype"},
            "data": {"synthetic": {
                "session_label_sets": [["a", "b"], ["b", "c"]],
                "feature_dim": 6, "samples_per_class_per_session": 8,
                "subjects_per_session": 4, "seed": 5}},
            "out": str(tmp_path / "out"),
        }
        config.update(extra)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config), encoding="utf-8")
        return path

    def test_run_writes_report(self, tmp_path):
        config = self.run_config(tmp_path)
        assert cli_main(["run", "--config", str(config), "--deterministic"]) == 0
        report = load_report(tmp_path / "out" / "report.json")
        assert report.k == 3
        assert (tmp_path / "out" / "report.txt").is_file()
        assert len(list((tmp_path / "out" / "trials").glob("trial_*.json"))) == 3

    def test_flag_overrides_config(self, tmp_path):
        config = self.run_config(tmp_path)
        assert cli_main(["run", "--config", str(config), "--learner", "finetune",
                         "--deterministic"]) == 0
        report = load_report(tmp_path / "out" / "report.json")
        assert report.config["learner"]["variant"] == "finetune"

    def test_synth_then_run_from_manifest(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps({
            "session_label_sets": [["a", "b"], ["b", "c"]],
            "feature_dim": 4, "samples_per_class_per_session": 8,
            "subjects_per_session": 4, "seed": 2}), encoding="utf-8")
        assert cli_main(["synth", "--spec", str(spec_path),
                         "--out", str(tmp_path / "data")]) == 0
        config = {
            "protocol": "slcv", "k": 2, "seed": 1,
            "learner": {"variant": "prototype"},
            "data": {"manifest": "data/manifest.json"},
            "out": str(tmp_path / "out2"),
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config), encoding="utf-8")
        assert cli_main(["run", "--config", str(config_path), "--deterministic"]) == 0
        assert (tmp_path / "out2" / "report.json").is_file()

    def test_split_emits_fold_csv(self, tmp_path):
        config = self.run_config(tmp_path)
        out_csv = tmp_path / "folds.csv"
        assert cli_main(["split", "--config", str(config), "--out", str(out_csv)]) == 0
        with open(out_csv, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["session", "sample_id", "subject_id", "fold"]
        assert len(rows) == 1 + 16 + 16  # header + both sessions
        assert {r[3] for r in rows[1:]} <= {"1", "2", "3"}

    def test_report_reaggregates(self, tmp_path, capsys):
        config = self.run_config(tmp_path)
        assert cli_main(["run", "--config", str(config), "--deterministic"]) == 0
        assert cli_main(["report", "--in", str(tmp_path / "out")]) == 0
        assert "Session 1" in capsys.readouterr().out

    def test_bad_config_reports_error(self, tmp_path, capsys):
        assert cli_main(["run", "--config", str(tmp_path / "nope.json")]) == 2
        assert "error:" in capsys.readouterr().err
