import pytest

from toy import toy_bundle, toy_dict, toy_text


@pytest.fixture
def toy():
    return toy_bundle()


@pytest.fixture
def toy_doc():
    return toy_dict()


@pytest.fixture
def toy_file(tmp_path):
    path = tmp_path / "toy.bundle"
    path.write_text(toy_text(), encoding="utf-8")
    return path
