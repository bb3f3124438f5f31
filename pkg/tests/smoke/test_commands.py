import numpy as np
import pytest

from pyhcr import GeneralDefinitions
from pyhcr.__main__ import main
from pyhcr.benchmark import BenchmarkReport


@pytest.mark.order(1)
def test_we_are_using_tmp_cachedir():
    try:
        assert (
            pytest.original_package_cache_directory
            != GeneralDefinitions.PACKAGE_CACHE_DIRECTORY
        )

    except AssertionError:
        pytest.exit(
            "Refuse to continue: Tests attempted to use the package's real cache dir "
            + f"({GeneralDefinitions.PACKAGE_CACHE_DIRECTORY})!"
        )


def test_convert(circle_region_file, capsys):
    main(["convert", "--region", str(circle_region_file), "--point", "5,0"])
    lines = capsys.readouterr().out.splitlines()
    assert lines == ["d = (1, 0)", "r = 0.5", "s = 10", "binding constraint = 0"]


def test_roundtrip(circle_region_file, capsys):
    main(
        [
            "roundtrip",
            "--region",
            str(circle_region_file),
            "--points",
            "100",
            "--directions",
            "10",
        ]
    )
    output = capsys.readouterr().out
    assert "n_infeasible: 0" in output
    assert "acceleration.mean_restricted_set_size: 1.0" in output


def test_bench_synthetic(tmp_path, capsys):
    out, out_csv = tmp_path / "report.json", tmp_path / "summary.csv"
    main(
        [
            "bench-synthetic",
            "--k",
            "4",
            "--n",
            "6",
            "--train",
            "30",
            "--test",
            "30",
            "--seeds",
            "0",
            "1",
            "--epochs",
            "2",
            "--hidden",
            "8",
            "--out",
            str(out),
            "--out-csv",
            str(out_csv),
        ]
    )
    assert "Benchmark: synthetic" in capsys.readouterr().out
    assert out_csv.exists()
    report = BenchmarkReport.from_file(out)
    assert [task.task for task in report.tasks] == ["seed=0", "seed=1"]
    assert len(report.runs) == 8


def test_bench_timeseries_synthetic(tmp_path):
    out = tmp_path / "report.json"
    main(
        [
            "bench-timeseries",
            "--synthetic",
            "--n",
            "4",
            "--count",
            "2",
            "--length",
            "40",
            "--epochs",
            "2",
            "--out",
            str(out),
        ]
    )
    report = BenchmarkReport.from_file(out)
    assert report.error_metric == "r-mse"
    assert [task.task for task in report.tasks] == ["synthetic-000", "synthetic-001"]


def test_bench_timeseries_from_csv(tmp_path):
    series_dir = tmp_path / "series"
    series_dir.mkdir()
    rng = np.random.default_rng(0)
    for name in ("alpha", "beta"):
        values = 50 + np.cumsum(rng.uniform(-1, 1, 40))
        (series_dir / f"{name}.csv").write_text("\n".join(map(str, values)))
    out = tmp_path / "report.json"
    main(
        [
            "timeseries",
            "--series-dir",
            str(series_dir),
            "--n",
            "4",
            "--epochs",
            "2",
            "--out",
            str(out),
        ]
    )
    report = BenchmarkReport.from_file(out)
    assert [task.task for task in report.tasks] == ["alpha", "beta"]
    assert all(task.m == 14 for task in report.tasks)


@pytest.mark.parametrize(
    ("contents", "point", "exit_code"),
    [
        (None, "20,0", 2),
        (None, "a,b", 4),
        ("{\n  broken", "5,0", 4),
    ],
)
def test_error_exit_codes(
    tmp_path, circle_region_file, contents, point, exit_code
):
    region_file = circle_region_file
    if contents is not None:
        region_file = tmp_path / "broken.json"
        region_file.write_text(contents)
    with pytest.raises(SystemExit) as error:
        main(["convert", "--region", str(region_file), "--point", point])
    assert error.value.code == exit_code


def test_missing_region_file(tmp_path):
    with pytest.raises(SystemExit) as error:
        main(["roundtrip", "--region", str(tmp_path / "missing.json")])
    assert error.value.code == 3


def test_version():
    with pytest.raises(SystemExit) as error:
        main(["--version"])
    assert error.value.code == 0


@pytest.mark.parametrize(("allow_empty", "exit_code"), [(False, 4), (True, None)])
def test_bench_timeseries_with_empty_csv(tmp_path, caplog, allow_empty, exit_code):
    series_dir = tmp_path / "series"
    series_dir.mkdir()
    values = 50 + np.cumsum(np.random.default_rng(1).uniform(-1, 1, 40))
    (series_dir / "alpha.csv").write_text("\n".join(map(str, values)))
    (series_dir / "empty.csv").write_text("")
    out = tmp_path / "report.json"
    args = [
        "bench-timeseries",
        "--series-dir",
        str(series_dir),
        "--n",
        "4",
        "--epochs",
        "2",
        "--out",
        str(out),
    ]
    if allow_empty:
        args.append("--allow-empty")

    if exit_code is None:
        main(args)
        report = BenchmarkReport.from_file(out)
        assert [task.task for task in report.tasks] == ["alpha"]
        assert "Skipping empty series" in caplog.text
    else:
        with pytest.raises(SystemExit) as error:
            main(args)
        assert error.value.code == exit_code
        assert not out.exists()
