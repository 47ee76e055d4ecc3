import logging

import numpy as np
import pytest

from pcsnet import DataError, FormatError, PcsError, PointCloud, TriangleMesh
from pcsnet import read_cloud, read_mesh, sample_mesh_surface, write_cloud, write_mesh
from pcsnet.metrics import nearest_face_distances


def write(tmp_path, name, content):
    p = tmp_path / name
    if isinstance(content, bytes):
        p.write_bytes(content)
    else:
        p.write_text(content)
    return p


def tetra():
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    T = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return TriangleMesh(V, T)


# OBJ

def test_obj_single_triangle(tmp_path):
    m = read_mesh(write(tmp_path, "a.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
    assert m.vertices.shape == (3, 3)
    assert m.triangles.tolist() == [[0, 1, 2]]


def test_obj_quad_fan(tmp_path):
    src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"
    m = read_mesh(write(tmp_path, "q.obj", src))
    assert m.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_obj_slash_tokens_and_comments(tmp_path):
    src = "# header\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2//1 3/3 # tri\n"
    assert read_mesh(write(tmp_path, "s.obj", src)).triangles.tolist() == [[0, 1, 2]]


def test_obj_zero_index_is_malformed(tmp_path):
    with pytest.raises(FormatError) as exc:
        read_mesh(write(tmp_path, "z.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n"))
    assert exc.value.code == "malformed"
    assert exc.value.line == 4
    assert "line 4" in str(exc.value)


def test_obj_bad_coordinate_line_number(tmp_path):
    with pytest.raises(FormatError) as exc:
        read_mesh(write(tmp_path, "b.obj", "v 0 0 0\nv 1 x 0\n"))
    assert exc.value.line == 2


def test_degenerate_faces_dropped_with_warning(tmp_path, caplog):
    src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nf 1 2 3\nf 1 2 4\n"
    with caplog.at_level(logging.WARNING):
        m = read_mesh(write(tmp_path, "d.obj", src))
    assert len(m.triangles) == 1
    assert "dropped 1 degenerate" in caplog.text


def test_all_degenerate_is_error(tmp_path):
    with pytest.raises(DataError) as exc:
        read_mesh(write(tmp_path, "e.obj", "v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n"))
    assert exc.value.code == "degenerate-mesh"


@pytest.mark.parametrize("suffix", [".obj", ".ply"])
def test_mesh_roundtrip(tmp_path, suffix):
    rng = np.random.default_rng(0)
    V = rng.normal(size=(30, 3))
    T = np.array([rng.choice(30, 3, replace=False) for _ in range(40)])
    mesh = TriangleMesh(V, T)
    write_mesh(mesh, tmp_path / f"m{suffix}")
    back = read_mesh(tmp_path / f"m{suffix}")
    np.testing.assert_array_equal(back.vertices, V)
    np.testing.assert_array_equal(back.triangles, T)


# PLY

PLY_HEAD = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"


def test_ply_ascii_mesh_with_extra_vertex_property(tmp_path):
    src = ("ply\nformat ascii 1.0\ncomment hi\nelement vertex 3\nproperty float x\nproperty float y\n"
           "property float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\n"
           "end_header\n0 0 0 255\n1 0 0 0\n0 1 0 9\n3 0 1 2\n")
    m = read_mesh(write(tmp_path, "m.ply", src))
    assert m.triangles.tolist() == [[0, 1, 2]]


def test_ply_unsupported_property(tmp_path):
    src = PLY_HEAD + "property list uchar int bogus\nend_header\n"
    with pytest.raises(FormatError) as exc:
        read_cloud(write(tmp_path, "u.ply", src))
    assert exc.value.code == "unsupported-property"


def test_ply_unknown_scalar_type(tmp_path):
    src = PLY_HEAD + "property quaternion w\nend_header\n"
    with pytest.raises(FormatError) as exc:
        read_cloud(write(tmp_path, "t.ply", src))
    assert exc.value.code == "unsupported-property"


def test_ply_big_endian_rejected(tmp_path):
    src = PLY_HEAD.replace("ascii", "binary_big_endian") + "end_header\n"
    with pytest.raises(DataError) as exc:
        read_cloud(write(tmp_path, "be.ply", src))
    assert exc.value.code == "unsupported-format"


@pytest.mark.parametrize("binary", [False, True])
def test_cloud_ply_roundtrip_exact(tmp_path, binary):
    rng = np.random.default_rng(1)
    cloud = PointCloud(rng.normal(size=(50, 3)), rng.uniform(size=50))
    write_cloud(cloud, tmp_path / "c.ply", binary=binary)
    back = read_cloud(tmp_path / "c.ply")
    np.testing.assert_array_equal(back.points, cloud.points)
    np.testing.assert_array_equal(back.saliency, cloud.saliency)


def test_binary_float_ply_reads(tmp_path):
    P = np.random.default_rng(2).normal(size=(4, 3)).astype("<f4")
    head = ("ply\nformat binary_little_endian 1.0\nelement vertex 4\nproperty float x\n"
            "property float y\nproperty float z\nend_header\n").encode()
    back = read_cloud(write(tmp_path, "f.ply", head + P.tobytes()))
    np.testing.assert_array_equal(back.points, P.astype(np.float64))


# XYZ

def test_xyz_basic(tmp_path):
    c = read_cloud(write(tmp_path, "a.xyz", "0 0 0\n1 1 1\n"))
    assert c.points.shape == (2, 3)
    assert c.saliency is None


def test_xyz_saliency_column(tmp_path):
    c = read_cloud(write(tmp_path, "b.xyz", "0 0 0 0.5\n"))
    assert c.saliency.tolist() == [0.5]


def test_xyz_ragged(tmp_path):
    with pytest.raises(FormatError) as exc:
        read_cloud(write(tmp_path, "r.xyz", "0 0 0\n1 1 1 1\n"))
    assert exc.value.code == "ragged-columns"
    assert exc.value.line == 2


def test_xyz_roundtrip_17_digits(tmp_path):
    rng = np.random.default_rng(3)
    cloud = PointCloud(rng.normal(size=(100, 3)) * 1e3, rng.uniform(size=100))
    write_cloud(cloud, tmp_path / "c.xyz")
    back = read_cloud(tmp_path / "c.xyz")
    np.testing.assert_array_equal(back.points, cloud.points)
    np.testing.assert_array_equal(back.saliency, cloud.saliency)


def test_unknown_extension(tmp_path):
    with pytest.raises(DataError) as exc:
        read_cloud(write(tmp_path, "a.foo", "0 0 0\n"))
    assert exc.value.code == "unsupported-format"


# surface sampling

def test_samples_on_single_triangle():
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    P = sample_mesh_surface(mesh, 500, 0).points
    assert np.all(nearest_face_distances(P, mesh) <= 1e-12)
    assert np.all(P[:, 0] + P[:, 1] <= 1 + 1e-12)


def test_area_proportional_split():
    # second triangle has 1/9 of the first one's area
    V = [[0, 0, 0], [3, 0, 0], [0, 3, 0], [10, 0, 0], [11, 0, 0], [10, 1, 0]]
    mesh = TriangleMesh(V, [[0, 1, 2], [3, 4, 5]])
    P = sample_mesh_surface(mesh, 10_000, 7).points
    big = np.sum(P[:, 0] < 5)
    assert 8700 <= big <= 9300


def test_sample_count_one_on_surface():
    P = sample_mesh_surface(tetra(), 1, 3).points
    assert P.shape == (1, 3)
    assert nearest_face_distances(P, tetra())[0] <= 1e-12


def test_sample_is_seeded():
    a = sample_mesh_surface(tetra(), 50, 9).points
    b = sample_mesh_surface(tetra(), 50, 9).points
    np.testing.assert_array_equal(a, b)


# fuzzing: malformed input must raise a package error, never anything else

def _valid_files(rng):
    V = rng.normal(size=(6, 3))
    T = [rng.choice(6, 3, replace=False) for _ in range(4)]
    obj = "".join(f"v {x} {y} {z}\n" for x, y, z in V) + "".join(f"f {a+1} {b+1} {c+1}\n" for a, b, c in T)
    ply = ("ply\nformat ascii 1.0\nelement vertex 6\nproperty double x\nproperty double y\n"
           "property double z\nelement face 4\nproperty list uchar int vertex_indices\nend_header\n"
           + "".join(f"{x} {y} {z}\n" for x, y, z in V) + "".join(f"3 {a} {b} {c}\n" for a, b, c in T))
    bply = (("ply\nformat binary_little_endian 1.0\nelement vertex 6\nproperty double x\nproperty double y\n"
             "property double z\nproperty double saliency\nend_header\n").encode()
            + np.column_stack([V, np.abs(V[:, 0])]).astype("<f8").tobytes())
    xyz = "".join(f"{x} {y} {z} 0.5\n" for x, y, z in V)
    return [("m.obj", obj.encode()), ("m.ply", ply.encode()), ("c.ply", bply), ("c.xyz", xyz.encode())]


def _corrupt(data, rng):
    b = bytearray(data)
    kind = rng.integers(6)
    if kind == 0 and len(b) > 1:
        return bytes(b[: rng.integers(0, len(b))])
    if kind == 1:
        for _ in range(rng.integers(1, 8)):
            b[rng.integers(len(b))] = rng.integers(256)
        return bytes(b)
    if kind == 2:
        pos = rng.integers(len(b) + 1)
        junk = rng.choice([b"-1", b"nan", b" 999999", b"\n", b"f 0 0", b"\xff\xfe", b"1e400", b"v", b" x "])
        return bytes(b[:pos] + junk + b[pos:])
    if kind == 3:
        lines = bytes(b).split(b"\n")
        rng.shuffle(lines)
        return b"\n".join(lines)
    if kind == 4:
        return bytes(b).replace(b"6", str(rng.integers(0, 100)).encode(), 1)
    return bytes(rng.integers(0, 256, size=rng.integers(0, 200), dtype=np.uint8))


def test_fuzz_1000_cases(tmp_path):
    rng = np.random.default_rng(2024)
    outcomes = {"ok": 0, "error": 0}
    for case in range(1000):
        name, data = _valid_files(rng)[case % 4]
        path = tmp_path / f"{case}_{name}"
        path.write_bytes(_corrupt(data, rng))
        reader = read_mesh if name.startswith("m") else read_cloud
        try:
            out = reader(path)
        except PcsError:
            outcomes["error"] += 1
            continue
        outcomes["ok"] += 1
        if isinstance(out, TriangleMesh):
            assert out.triangles.min() >= 0 and out.triangles.max() < len(out.vertices)
        else:
            assert np.all(np.isfinite(out.points))
    assert outcomes["error"] > 100
