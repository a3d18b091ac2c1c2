import io
import json

import numpy as np
import pytest

from haar_averager import output
from haar_averager.engine.basis import StepFunction
from haar_averager.output import (
    CsvWriter,
    JsonWriter,
    RunManifest,
    UnsupportedFormatError,
    WriterClosedError,
    format_float,
    get_writer,
    normalize,
    register_writer,
)
from haar_averager.output.grid import GridFormatError, read_grid, write_grid

MANIFEST = RunManifest.create("constant", {"family": "new", "b": 1.5, "out": None, "sigma": (1, -1, -1)},
                              {"search": 0})


class TestManifest:
    def test_unset_flags_dropped(self):
        assert "out" not in MANIFEST.flags
        assert MANIFEST.flags["sigma"] == [1, -1, -1]

    def test_to_dict(self):
        data = MANIFEST.to_dict(include_timestamp=False)
        assert set(data) == {"subcommand", "flags", "version", "seeds"}
        assert "timestamp" in MANIFEST.to_dict()

    def test_complex_flags_are_rendered(self):
        assert RunManifest.create("x", {"sigma": 1j}).flags["sigma"] == "1j"


class TestNormalize:
    def test_floats_rounded(self):
        assert format_float(1.0 / 3.0) == "0.333333333333"
        assert normalize(1.0 / 3.0) == 0.333333333333

    def test_numpy_and_complex(self):
        value = normalize({"a": np.float64(0.5), "z": 1 + 2j, "v": np.array([1, 2]), "t": (True, None)})
        assert value == {"a": 0.5, "z": {"re": 1.0, "im": 2.0}, "v": [1, 2], "t": [True, None]}

    def test_non_finite_kept(self):
        assert normalize(float("inf")) == float("inf")


class TestCsvWriter:
    def test_manifest_line_then_header(self):
        stream = io.StringIO()
        count = CsvWriter().write_document(stream, MANIFEST, [{"x": 0.1, "y": 2.0 / 3.0}], ["x", "y"])
        lines = stream.getvalue().split("\n")
        assert count == 1
        assert lines[0].startswith("# ")
        assert json.loads(lines[0][2:])["subcommand"] == "constant"
        assert lines[1] == "x,y"
        assert lines[2] == "0.1,0.666666666667"
        assert lines[3] == ""

    def test_header_without_records(self):
        stream = io.StringIO()
        CsvWriter().write_document(stream, MANIFEST, [], ["stage", "C"])
        assert stream.getvalue().splitlines()[1:] == ["stage,C"]

    def test_extra_keys_extend_header(self):
        stream = io.StringIO()
        CsvWriter().write_document(stream, MANIFEST, [{"a": 1, "b": 2}], ["a"])
        assert stream.getvalue().splitlines()[1] == "a,b"

    def test_nested_values_are_json(self):
        stream = io.StringIO()
        CsvWriter().write_document(stream, MANIFEST, [{"params": {"b": 1.5}}])
        assert stream.getvalue().splitlines()[2] == '"{""b"":1.5}"'

    def test_closed_writer(self):
        writer = CsvWriter()
        writer.open(io.StringIO())
        writer.close()
        with pytest.raises(WriterClosedError):
            writer.write_records([{"a": 1}])

    def test_file_destination(self, tmp_path):
        path = tmp_path / "nested" / "out.csv"
        CsvWriter().write_document(path, MANIFEST, [{"a": 1}])
        assert path.read_text(encoding="utf-8").splitlines()[1:] == ["a", "1"]


class TestJsonWriter:
    def test_records_envelope(self):
        stream = io.StringIO()
        JsonWriter().write_document(stream, MANIFEST, [{"C": np.float64(2.0), "I": 0.5 + 0.25j}])
        text = stream.getvalue()
        assert text.endswith("}\n")
        document = json.loads(text)
        assert document["manifest"]["flags"]["family"] == "new"
        assert document["data"] == [{"C": 2.0, "I": {"re": 0.5, "im": 0.25}}]

    def test_write_object(self):
        stream = io.StringIO()
        writer = JsonWriter()
        writer.open(stream)
        writer.write_manifest(MANIFEST)
        writer.write_object({"best": None})
        writer.close()
        assert json.loads(stream.getvalue())["data"] == {"best": None}

    def test_records_after_object_rejected(self):
        writer = JsonWriter()
        writer.open(io.StringIO())
        writer.write_object({})
        with pytest.raises(ValueError):
            writer.write_records([{}])


class TestRegistry:
    def test_known_formats(self):
        assert isinstance(get_writer("csv"), CsvWriter)
        assert isinstance(get_writer("json"), JsonWriter)

    def test_unknown_format(self):
        with pytest.raises(UnsupportedFormatError):
            get_writer("parquet")

    def test_register(self, monkeypatch):
        class TsvWriter(CsvWriter):
            pass

        monkeypatch.setattr(output, "_WRITERS", dict(output._WRITERS))
        register_writer("tsv", TsvWriter)
        assert isinstance(get_writer("tsv"), TsvWriter)


class TestDenseGrid:
    TEXT = "# comment\nnx, ny, x0, y0, h\n2, 2, 1, -1, 0.5\n1, 0\n2, 0.5\n-3, 0\n0, -1\n"

    def test_read(self):
        f = read_grid(io.StringIO(self.TEXT))
        assert (f.n, f.origin, f.h, f.triangular) == (2, (1.0, -1.0), 0.5, False)
        np.testing.assert_array_equal(f.values, [[1, 2 + 0.5j], [-3, -1j]])

    def test_names_line_is_optional(self):
        bare = self.TEXT.replace("nx, ny, x0, y0, h\n", "")
        np.testing.assert_array_equal(read_grid(io.StringIO(bare)).values, read_grid(io.StringIO(self.TEXT)).values)

    def test_write_then_read(self, tmp_path):
        f = read_grid(io.StringIO(self.TEXT))
        path = tmp_path / "nested" / "g.csv"
        assert write_grid(path, MANIFEST, f) == 4
        lines = path.read_text(encoding="utf-8").split("\n")
        assert lines[0].startswith("# {")
        assert lines[1:4] == ["nx,ny,x0,y0,h", "2,2,1,-1,0.5", "1,0"]
        back = read_grid(path)
        assert (back.origin, back.h) == (f.origin, f.h)
        np.testing.assert_array_equal(back.values, f.values)

    @pytest.mark.parametrize("text, line", [
        ("2,2,0,0,0.5\n1,0\nx,0\n1,0\n1,0\n", 3),
        ("2,2,0,0,0.5\n1,0\n1\n1,0\n1,0\n", 3),
        ("2.5,2,0,0,0.5\n", 1),
        ("2,4,0,0,0.5\n", 1),
    ])
    def test_malformed_rows_name_the_line(self, text, line):
        with pytest.raises(GridFormatError) as info:
            read_grid(io.StringIO(text))
        assert info.value.line == line
        assert str(info.value).startswith(f"line {line}: ")

    @pytest.mark.parametrize("text, match", [
        ("", "missing"),
        ("2,2,0,0,0.5\n1,0\n", "expected 4"),
        ("2,2,0,0,-0.5\n" + "0,0\n" * 4, "cell size"),
    ])
    def test_malformed_grids(self, text, match):
        with pytest.raises(GridFormatError, match=match):
            read_grid(io.StringIO(text))

    def test_only_planar_box_grids_are_written(self):
        cube = StepFunction(np.zeros((2, 2, 2)), (0.0, 0.0, 0.0), 0.5)
        with pytest.raises(ValueError, match="planar"):
            write_grid(io.StringIO(), MANIFEST, cube)
