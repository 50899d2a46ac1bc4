from facespace.api.losses import (
    LossParts,
    LossWeights,
    domain_loss,
    total_generator_loss,
)
from facespace.api.model import discriminate, encode
from facespace.api.synthdata import BatchStream, generate_world
from facespace.api.training import (
    METRIC_COLUMNS,
    Checkpoint,
    MetricsLog,
    StepMetrics,
    TrainConfig,
    Trainer,
    ablation_level,
    load_checkpoint,
    run,
    save_checkpoint,
    train_step,
)
from facespace.autodiff import Tensor
from facespace.errors import CheckpointError, ConfigError
from facespace.objects import ModelState, WorldSpec
from facespace.utils.config import ModelConfig, RunConfig
from facespace.utils.optim import make_optimizer

import numpy as np
import pandas as pd
import pytest
import warnings

WORLD = WorldSpec(num_identities=4, frames_per_identity=8, dim_zid=2, dim_zm=2, m=8)
MODEL = ModelConfig(p=2, q=2, n=8, hidden=8)


def small_config(**train) -> RunConfig:
    settings = dict(steps=4, batch_size=8, progress=False, log_every=0)
    settings.update(train)
    return RunConfig(world=WORLD, model=MODEL, train=TrainConfig(**settings))


def fresh_state(config: RunConfig) -> ModelState:
    rng = np.random.default_rng([config.train.seed, 20])
    return ModelState.create(
        config.model.dims(config.world),
        rng,
        use_basis=config.train.level >= 1,
    )


def one_step(config: RunConfig):
    cfg = config.train
    state = fresh_state(config)
    before = {k: v.copy() for k, v in state.parameter_arrays().items()}
    batch = BatchStream(generate_world(config.world), cfg.batch_size).batch(0)
    gen = make_optimizer(cfg.optimizer, state.generator_parameters(), cfg.lr_gen)
    disc = make_optimizer(cfg.optimizer, state.discriminator_parameters(), cfg.lr_disc)
    metrics = train_step(state, batch, cfg, gen, disc, step=1)
    return before, state.parameter_arrays(), metrics


def test_ablation_level_names():
    """Level names rank in order and accept a leading plus."""
    assert ablation_level("base") == 0
    assert ablation_level("+semantics") == 3
    assert ablation_level("Decoupling") == 2
    with pytest.raises(ConfigError):
        ablation_level("everything")
    assert TrainConfig(ablation="+subspaces").ablation == "subspaces"


def test_zero_learning_rates_freeze_the_model():
    """With both learning rates at 0 a step changes no parameter."""
    before, after, metrics = one_step(small_config(lr_gen=0.0, lr_disc=0.0))
    for key, value in before.items():
        assert np.array_equal(value, after[key]), key
    row = metrics.as_row()
    assert all(np.isfinite(row[c]) for c in METRIC_COLUMNS)


def test_generator_step_leaves_discriminator_alone():
    """The generator update never moves the discriminator."""
    before, after, _ = one_step(small_config(lr_gen=1e-2, lr_disc=0.0))
    disc = [k for k in before if k.startswith("disc.")]
    others = [k for k in before if not k.startswith("disc.")]
    assert disc and others
    assert all(np.array_equal(before[k], after[k]) for k in disc)
    assert any(not np.array_equal(before[k], after[k]) for k in others)


def test_discriminator_step_leaves_generator_alone():
    """The discriminator update only moves the discriminator."""
    before, after, metrics = one_step(small_config(lr_gen=0.0, lr_disc=1e-2))
    for key in before:
        if key.startswith("disc."):
            continue
        assert np.array_equal(before[key], after[key]), key
    assert any(
        not np.array_equal(before[k], after[k]) for k in before if k.startswith("disc.")
    )
    assert metrics.disc > 0


def test_base_level_reconstructs_only():
    """The base level trains without basis and computes only L_recon."""
    config = small_config(ablation="base")
    before, _, metrics = one_step(config)
    assert "basis.raw" not in before
    assert metrics.recon > 0
    assert metrics.s == metrics.d == metrics.r == metrics.id == 0.0
    assert metrics.total == pytest.approx(metrics.recon)


def test_semantics_level_computes_every_term():
    """The full model reports every loss component."""
    _, _, metrics = one_step(small_config(ablation="semantics"))
    assert metrics.recon > 0 and metrics.d > 0 and metrics.id > 0
    assert -1.0 <= metrics.s <= 1.0
    assert metrics.r >= 0


def test_subspaces_level_skips_decoupling_terms():
    """Subspaces alone use the basis but no similarity or domain term."""
    before, _, metrics = one_step(small_config(ablation="subspaces"))
    assert "basis.raw" in before
    assert metrics.s == metrics.d == 0.0
    assert metrics.disc == 0.0


def test_trainer_rejects_mismatched_model():
    """A bypass model cannot be trained at a subspace level and vice versa."""
    config = small_config(ablation="base")
    samples = generate_world(WORLD)
    with pytest.raises(ConfigError):
        Trainer(fresh_state(config), samples, small_config().train)
    with pytest.raises(ConfigError):
        Trainer(fresh_state(small_config()), samples, config.train)


def test_runs_are_reproducible(tmp_path):
    """Two runs of one configuration write identical checkpoints."""
    config = small_config()
    run(config, tmp_path / "a")
    run(config, tmp_path / "b")
    assert (tmp_path / "a" / "model.ckpt").read_bytes() == (
        tmp_path / "b" / "model.ckpt"
    ).read_bytes()
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (
        tmp_path / "b" / "metrics.csv"
    ).read_bytes()


def test_resume_matches_uninterrupted_run(tmp_path):
    """Training 2 steps and resuming to 4 equals training 4 steps straight."""
    run(small_config(steps=4), tmp_path / "full")
    run(small_config(steps=2), tmp_path / "split")
    final = run(small_config(steps=4), tmp_path / "split", resume=True)
    assert final.step == 4
    for name in ("model.ckpt", "metrics.csv"):
        assert (tmp_path / "full" / name).read_bytes() == (
            tmp_path / "split" / name
        ).read_bytes(), name


def test_checkpointing_mid_run_does_not_change_result(tmp_path):
    """Intermediate checkpoints leave the final state unchanged."""
    run(small_config(steps=4), tmp_path / "plain")
    run(small_config(steps=4, checkpoint_every=1), tmp_path / "often")
    assert (tmp_path / "plain" / "model.ckpt").read_bytes() == (
        tmp_path / "often" / "model.ckpt"
    ).read_bytes()


def test_resume_rejects_other_configuration(tmp_path):
    """Resuming with a changed learning rate is refused."""
    run(small_config(steps=2), tmp_path)
    with pytest.raises(CheckpointError):
        run(small_config(steps=4, lr_gen=5e-3), tmp_path, resume=True)
    with pytest.raises(CheckpointError):
        run(small_config(steps=1), tmp_path, resume=True)


def test_checkpoint_save_load_save(tmp_path):
    """Loading and re-saving a checkpoint reproduces its bytes."""
    config = small_config(steps=2)
    final = run(config, tmp_path)
    path = tmp_path / "model.ckpt"
    loaded = load_checkpoint(path, expected_digest=config.digest())
    assert loaded.step == 2
    assert loaded.seed == config.train.seed
    assert loaded.optimizer.keys() == final.optimizer.keys()
    save_checkpoint(tmp_path / "again.ckpt", loaded)
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()
    with pytest.raises(CheckpointError):
        load_checkpoint(path, expected_digest=bytes(32))


def test_checkpoint_requires_training_records():
    """Records without the step counter are rejected."""
    state = fresh_state(small_config())
    records = Checkpoint(state, 3, 0, bytes(32)).records()
    del records["train/step"]
    with pytest.raises(CheckpointError):
        Checkpoint.from_records(bytes(32), records)


def test_large_seed_round_trips(tmp_path):
    """Seeds above 32 bits survive the checkpoint."""
    seed = 2**40 + 7
    state = fresh_state(small_config())
    save_checkpoint(tmp_path / "s.ckpt", Checkpoint(state, 0, seed, bytes(32)))
    assert load_checkpoint(tmp_path / "s.ckpt").seed == seed


def test_metrics_file(tmp_path):
    """metrics.csv has one row per step with the fixed columns."""
    run(small_config(steps=3), tmp_path)
    frame = pd.read_csv(tmp_path / "metrics.csv")
    assert tuple(frame.columns) == METRIC_COLUMNS
    assert frame["step"].tolist() == [1, 2, 3]
    assert np.isfinite(frame.to_numpy()).all()
    assert (tmp_path / "config.resolved").read_text().startswith("[world]")


def test_train_config_validation():
    """Invalid training settings name their key."""
    with pytest.raises(ConfigError) as e:
        TrainConfig(batch_size=7)
    assert e.value.key == "train.batch_size"
    with pytest.raises(ConfigError):
        TrainConfig(steps=0)
    with pytest.raises(ConfigError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ConfigError):
        TrainConfig(weights=LossWeights(s=-1.0))


def test_domain_term_reverses_encoder_gradients():
    """Through the generator objective, L_d reaches the encoder and basis with
    the sign flipped and scaled by the domain weight."""
    config = small_config()
    state = fresh_state(config)
    batch = BatchStream(generate_world(config.world), 8).batch(0)

    def domain() -> Tensor:
        state.begin_pass()
        d = encode(state, batch.sources, batch.drivings)
        return domain_loss(discriminate(state, d.w_m), batch.driving_labels)

    shared = {
        k: v
        for k, v in state.named_parameters().items()
        if k.startswith(("enc_m.", "basis."))
    }
    state.zero_grad()
    domain().backward()
    own = {k: v.grad.copy() for k, v in shared.items()}
    assert any(np.any(g != 0) for g in own.values())

    state.zero_grad()
    weights = config.weights
    total_generator_loss(LossParts(d=domain()), weights).backward()
    for key, tensor in shared.items():
        assert np.allclose(tensor.grad, -weights.d * own[key], rtol=1e-12, atol=0)


@pytest.mark.slow
def test_discriminator_loss_falls_early():
    """On the default benchmark the discriminator's own loss, smoothed over 10
    steps, ends the first 50 steps lower than it started."""
    config = RunConfig().with_train(steps=50, progress=False, log_every=0)
    trainer = Trainer(fresh_state(config), generate_world(config.world), config.train)
    losses = np.array([m.disc for m in trainer.train(50)])
    assert np.all(np.isfinite(losses)) and np.all(losses > 0)
    smoothed = np.convolve(losses, np.ones(10) / 10, mode="valid")
    assert smoothed[-1] < smoothed[0]


def test_step_record_accepts_one_element_arrays():
    """A step counter decoded as a one-element array converts without warnings."""
    state = fresh_state(small_config())
    records = Checkpoint(state, 3, 0, bytes(32)).records()
    records["train/step"] = np.array([3.0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert Checkpoint.from_records(bytes(32), records).step == 3


def test_metrics_log_keeps_rows_on_resume(tmp_path):
    """Reopening the log keeps earlier rows verbatim and drops later ones."""
    path = tmp_path / "metrics.csv"
    rows = [
        StepMetrics(k, 0.1 * k, -0.5, 1 / 3, 0.0, 2.0, 1e-17 * k) for k in (1, 2, 3)
    ]
    with MetricsLog(path) as log:
        for row in rows:
            log.write(row)
    full = path.read_text()
    with MetricsLog(path, keep_until=2) as log:
        assert pd.read_csv(path)["step"].tolist() == [1, 2]
        log.write(rows[2])
    assert path.read_text() == full
    frame = pd.read_csv(path, float_precision="round_trip")
    assert frame["L_d"].tolist() == [1 / 3] * 3
