import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def image_dir(tmp_path):
    rng = np.random.default_rng(5)
    d = tmp_path / "imgs"
    d.mkdir()
    for i in range(7):
        arr = rng.integers(0, 255, size=(24, 32, 3), dtype=np.uint8)
        Image.fromarray(arr).save(d / f"pic{i}.png")
    return d


@pytest.fixture
def captions_file(tmp_path):
    p = tmp_path / "captions.txt"
    p.write_text("a photo of a dog\n"
                 "a photo of a cat\n"
                 "a photo of a dog\n"   # duplicate on purpose
                 "a street without pedestrians\n")
    return p
