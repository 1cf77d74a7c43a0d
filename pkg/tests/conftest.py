import numpy as np
import pytest

from wbganlab.gan import TrainConfig, train, train_vae
from wbganlab.phantom import phantom_generate
from wbganlab.preprocess import preprocess_pipeline

TOY_SCALE = 0.125

_acceptance_lines: list[str] = []


@pytest.fixture
def acceptance():
    """Record and assert one acceptance criterion; lines are echoed in the
    terminal summary so every criterion gets a visible pass/fail line."""

    def record(criterion: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] {criterion}"
        if detail:
            line += f" -- {detail}"
        _acceptance_lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def phantom_slices():
    return [preprocess_pipeline(r) for r in phantom_generate(42, 16, 0.02)]


@pytest.fixture(scope="session")
def tiny_gan_ckpt(phantom_slices):
    """A briefly trained toy DCGAN checkpoint for inversion/sweep tests."""
    cfg = TrainConfig(alpha=1e-3, batch_size=8, instance_noise_steps=0,
                      max_steps=30, seed=0, checkpoint_every=0,
                      resolution_scale=TOY_SCALE, channel_scale=TOY_SCALE)
    ckpt, _ = train("dcgan", phantom_slices, cfg)
    return ckpt


@pytest.fixture(scope="session")
def tiny_vae_ckpt(phantom_slices):
    cfg = TrainConfig(alpha=1e-3, batch_size=8, instance_noise_steps=0,
                      max_steps=20, seed=0, checkpoint_every=0,
                      resolution_scale=TOY_SCALE, channel_scale=TOY_SCALE)
    ckpt, _ = train_vae(phantom_slices, cfg)
    return ckpt


@pytest.fixture(scope="session")
def toy_images(phantom_slices):
    """Toy-resolution (100x32) versions of the phantom slices."""
    import torch
    import torch.nn.functional as F

    x = torch.from_numpy(np.stack([s.pixels for s in phantom_slices]))
    x = F.interpolate(x.float().unsqueeze(1), size=(100, 32), mode="bilinear",
                      align_corners=False)
    return [img.astype(np.float64) for img in x.squeeze(1).numpy()]
