"""Training Service - Batch encoding, joint loss, Adam training loop, checkpoints, multi-seed runs

Every sample is expanded into all six aspect queries; the loss is the mean
negative log-likelihood over (sample, aspect) pairs with four-way targets
(none included).
"""

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fcmf.exceptions import DivergenceError, NonFiniteError
from fcmf.models.fcmf import FCMFModel
from fcmf.models.perception import DEFAULT_THRESHOLD, CategoryHeads, VisualBatch
from fcmf.numerics import functional as F
from fcmf.numerics.optim import Adam, clip_grad_norm
from fcmf.numerics.rng import RngStreams
from fcmf.numerics.tensor import ComputeGraph, Tensor, no_grad
from fcmf.schemas.config import AblationFlags, CheckpointManifest, ModelConfig, RunManifest, TrainConfig, stable_hash
from fcmf.schemas.report import EpochMetrics, EvalReport, SeedResult, SeedSummary
from fcmf.schemas.sample import ASPECTS, SENTIMENTS, MultimodalSample
from fcmf.services.dataset_service import FeatureStore
from fcmf.services.metrics_service import build_eval_report
from fcmf.services.pipeline_service import run_image_pipeline
from fcmf.services.storage_service import StorageService
from fcmf.services.text_service import Vocabulary, build_auxiliary_sequence
from fcmf.utils.preprocessing import raw_split

logger = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "split", "loss", "macro_p", "macro_r", "macro_f1")
VOCAB_FILENAME = "vocab.txt"


# Batches


@dataclass(frozen=True)
class EncodedSample:
    """One sample ready for the model: six auxiliary sequences, targets, visual inputs"""

    sample_id: str
    token_ids: np.ndarray
    targets: np.ndarray
    visual: VisualBatch


@dataclass(frozen=True)
class Batch:
    """M = 6 x S queries over S samples"""

    sample_ids: list[str]
    token_ids: np.ndarray
    targets: np.ndarray
    visual: VisualBatch
    sample_index: np.ndarray

    @property
    def size(self) -> int:
        return len(self.sample_ids)


def sample_tokens(sample: MultimodalSample, ablation: AblationFlags) -> list[str]:
    """Preprocessed tokens, or a bare whitespace split of the raw text under no_preprocess"""
    return raw_split(sample.raw_text) if ablation.no_preprocess else list(sample.tokens)


def encode_sample(
    sample: MultimodalSample,
    vocab: Vocabulary,
    store: FeatureStore,
    model_config: ModelConfig,
    ablation: AblationFlags,
    heads: CategoryHeads | None = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> EncodedSample:
    pipeline = run_image_pipeline(sample, store, model_config, heads=heads, threshold=threshold)
    if ablation.no_aux_categories:
        image_categories, roi_categories = frozenset(), frozenset()
    else:
        image_categories, roi_categories = pipeline.image_categories, pipeline.roi_categories
    tokens = sample_tokens(sample, ablation)
    rows = [
        build_auxiliary_sequence(aspect, tokens, image_categories, roi_categories, vocab, model_config.max_len).ids
        for aspect in ASPECTS
    ]
    return EncodedSample(
        sample_id=sample.id,
        token_ids=np.asarray(rows, dtype=np.int64),
        targets=np.asarray([sample.label_for(a).position for a in ASPECTS], dtype=np.int64),
        visual=pipeline.visual,
    )


def encode_samples(
    samples: Sequence[MultimodalSample],
    vocab: Vocabulary,
    store: FeatureStore,
    model_config: ModelConfig,
    ablation: AblationFlags,
    heads: CategoryHeads | None = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> list[EncodedSample]:
    store.preload(samples)
    if store.threads > 1:
        with ThreadPoolExecutor(max_workers=store.threads) as pool:
            return list(
                pool.map(lambda s: encode_sample(s, vocab, store, model_config, ablation, heads, threshold), samples)
            )
    return [encode_sample(s, vocab, store, model_config, ablation, heads, threshold) for s in samples]


def collate(encoded: Sequence[EncodedSample]) -> Batch:
    n_aspects = len(ASPECTS)
    return Batch(
        sample_ids=[e.sample_id for e in encoded],
        token_ids=np.concatenate([e.token_ids for e in encoded]),
        targets=np.concatenate([e.targets for e in encoded]),
        visual=VisualBatch.stack([e.visual for e in encoded]),
        sample_index=np.repeat(np.arange(len(encoded)), n_aspects),
    )


# Loss


def nll_loss(log_probs: Tensor, targets: np.ndarray) -> Tensor:
    """-(1/M) Σ log P(y_m) over M (sample, aspect) rows"""
    return F.neg(F.mean(F.pick(log_probs, targets)))


@dataclass
class LossOutput:
    loss: Tensor
    log_probs: Tensor

    @property
    def predictions(self) -> np.ndarray:
        return np.argmax(self.log_probs.data, axis=-1)


def forward_loss(model: FCMFModel, batch: Batch) -> LossOutput:
    """Mean negative log-likelihood over every (sample, aspect) query in the batch

    Raises:
        NonFiniteError: the loss is NaN/Inf; the message names the samples and kernel
    """
    logits = model(batch.token_ids, batch.visual, batch.sample_index)
    log_probs = F.log_softmax(logits, axis=-1)
    loss = nll_loss(log_probs, batch.targets)
    if not math.isfinite(float(loss.data)):
        bad_rows = np.unique(np.nonzero(~np.isfinite(log_probs.data))[0])
        bad_ids = sorted({batch.sample_ids[int(batch.sample_index[r])] for r in bad_rows}) or batch.sample_ids
        node = ComputeGraph.from_output(loss).first_non_finite()
        kernel = node.op if node is not None else "unknown"
        raise NonFiniteError(f"non-finite loss for samples {bad_ids} (first produced by kernel '{kernel}')")
    return LossOutput(loss=loss, log_probs=log_probs)


# Data split


def split_dataset(
    samples: Sequence[MultimodalSample], dev_fraction: float, test_fraction: float, seed: int
) -> tuple[list[MultimodalSample], list[MultimodalSample], list[MultimodalSample]]:
    """Deterministic train/dev/test partition, independent of the model seeds"""
    order = RngStreams(seed).stream("split").permutation(len(samples))
    n_dev = int(round(len(samples) * dev_fraction))
    n_test = int(round(len(samples) * test_fraction))
    dev = [samples[int(i)] for i in order[:n_dev]]
    test = [samples[int(i)] for i in order[n_dev : n_dev + n_test]]
    train = [samples[int(i)] for i in order[n_dev + n_test :]]
    return train, dev, test


def decisions_by_aspect(targets: np.ndarray, predictions: np.ndarray) -> tuple[dict[str, list[str]], dict[str, list[str]]]:
    """(M,) rows in sample-major, aspect-minor order -> aspect -> label lists"""
    n_aspects = len(ASPECTS)
    gold: dict[str, list[str]] = {}
    pred: dict[str, list[str]] = {}
    for k, aspect in enumerate(ASPECTS):
        gold[aspect.value] = [SENTIMENTS[int(t)].value for t in targets[k::n_aspects]]
        pred[aspect.value] = [SENTIMENTS[int(p)].value for p in predictions[k::n_aspects]]
    return gold, pred


# Trainer


class Trainer:
    """Adam training of one FCMF model under one seed

    RNG streams: "init" (parameters, drawn by the caller), "dropout", "shuffle".
    """

    def __init__(self, model: FCMFModel, config: TrainConfig, seed: int, streams: RngStreams | None = None):
        self.model = model
        self.config = config
        self.seed = seed
        self.streams = streams or RngStreams(seed)
        self.params = model.named_parameters()
        self.optimizer = Adam(self.params, lr=config.learning_rate, betas=config.adam_betas, eps=config.adam_eps)
        self.epoch = 0
        self.history: list[EpochMetrics] = []

    def step(self, batch: Batch) -> LossOutput:
        """One forward/backward/update on `batch`

        Raises:
            DivergenceError: the loss or a gradient became non-finite; parameters are left as they were
        """
        self.model.train(self.streams.stream("dropout"))
        self.optimizer.zero_grad()
        update = f"epoch {self.epoch + 1}, update {self.optimizer.step_count + 1}"
        try:
            out = forward_loss(self.model, batch)
            out.loss.backward()
            if self.config.clip_norm is not None:
                norm = clip_grad_norm(self.params, self.config.clip_norm)
                logger.debug(f"Update {self.optimizer.step_count + 1}: loss {out.loss.item():.6f}, grad norm {norm:.4f}")
            self.optimizer.step()
        except NonFiniteError as e:
            raise DivergenceError(f"{update}: {e}") from e
        return out

    def batches(self, encoded: Sequence[EncodedSample], shuffle: bool) -> list[Batch]:
        order = self.streams.stream("shuffle").permutation(len(encoded)) if shuffle else np.arange(len(encoded))
        size = self.config.batch_size
        return [collate([encoded[int(i)] for i in order[s : s + size]]) for s in range(0, len(encoded), size)]

    def train_epoch(self, encoded: Sequence[EncodedSample]) -> EpochMetrics:
        """One shuffled pass; the row reports training-mode loss and predictions"""
        self.epoch += 1
        losses, weights, targets, predictions = [], [], [], []
        for batch in self.batches(encoded, shuffle=True):
            out = self.step(batch)
            losses.append(out.loss.item())
            weights.append(len(batch.targets))
            targets.append(batch.targets)
            predictions.append(out.predictions)
        return self._metrics_row("train", losses, weights, targets, predictions)

    def evaluate(self, encoded: Sequence[EncodedSample], split: str = "dev") -> tuple[EpochMetrics, EvalReport]:
        """Eval-mode pass (dropout off, no graph)"""
        self.model.eval()
        losses, weights, targets, predictions = [], [], [], []
        with no_grad():
            for batch in self.batches(encoded, shuffle=False):
                out = forward_loss(self.model, batch)
                losses.append(out.loss.item())
                weights.append(len(batch.targets))
                targets.append(batch.targets)
                predictions.append(out.predictions)
        row = self._metrics_row(split, losses, weights, targets, predictions)
        gold, pred = decisions_by_aspect(np.concatenate(targets), np.concatenate(predictions))
        return row, build_eval_report(gold, pred, n_samples=len(encoded))

    def _metrics_row(self, split, losses, weights, targets, predictions) -> EpochMetrics:
        if not losses:
            return EpochMetrics(epoch=self.epoch, split=split, loss=0.0, macro_p=0.0, macro_r=0.0, macro_f1=0.0)
        gold, pred = decisions_by_aspect(np.concatenate(targets), np.concatenate(predictions))
        report = build_eval_report(gold, pred)
        loss = float(np.dot(losses, weights) / np.sum(weights))
        return EpochMetrics(
            epoch=self.epoch,
            split=split,
            loss=loss,
            macro_p=report.macro_precision,
            macro_r=report.macro_recall,
            macro_f1=report.macro_f1,
        )

    def fit(
        self,
        train: Sequence[EncodedSample],
        dev: Sequence[EncodedSample],
        on_improve: Callable[["Trainer"], None] | None = None,
    ) -> tuple[int, float]:
        """Train for config.epochs, calling `on_improve` whenever dev macro-F1 reaches a new best

        Returns:
            (best epoch, best dev macro-F1); epoch 0 when dev is empty
        """
        best_epoch, best_f1 = 0, -1.0
        for _ in range(self.config.epochs):
            train_row = self.train_epoch(train)
            self.history.append(train_row)
            if dev:
                dev_row, _ = self.evaluate(dev, split="dev")
                self.history.append(dev_row)
                score = dev_row.macro_f1
            else:
                dev_row, score = None, train_row.macro_f1
            logger.info(
                f"seed {self.seed} epoch {self.epoch}: train loss {train_row.loss:.4f}"
                + (f", dev loss {dev_row.loss:.4f}, dev macro-F1 {dev_row.macro_f1:.4f}" if dev_row else "")
            )
            if score > best_f1:
                best_epoch, best_f1 = self.epoch, score
                if on_improve is not None:
                    on_improve(self)
        return best_epoch, max(best_f1, 0.0)


# Checkpoints


def save_checkpoint(
    trainer: Trainer,
    storage: StorageService,
    vocab: Vocabulary,
    command: str = "train",
) -> None:
    """manifest.json + vocab.txt + FCMT v2 blobs for parameters and both Adam moments"""
    config = trainer.config.model_dump(mode="json")
    manifest = CheckpointManifest(
        command=command,
        seed=trainer.seed,
        config=config,
        config_hash=stable_hash(config),
        kind="fcmf",
        vocab_size=len(vocab),
        epoch=trainer.epoch,
        rng_states=trainer.streams.state_dict(),
        optimizer=trainer.optimizer.hyperparameters(),
        history=trainer.history,
    )
    storage.delete_prefix("params")
    storage.delete_prefix("adam_m")
    storage.delete_prefix("adam_v")
    storage.put_tensors("params", trainer.model.state_dict())
    storage.put_tensors("adam_m", trainer.optimizer.m)
    storage.put_tensors("adam_v", trainer.optimizer.v)
    storage.put_text(VOCAB_FILENAME, "".join(f"{t}\n" for t in vocab.regular_tokens))
    storage.write_manifest(manifest)
    logger.debug(f"Checkpoint written to {storage.root}")


@dataclass
class LoadedCheckpoint:
    trainer: Trainer
    vocab: Vocabulary
    manifest: CheckpointManifest


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    """Rebuild model, optimizer state and RNG streams exactly as saved"""
    storage = StorageService(path)
    manifest = CheckpointManifest.model_validate(storage.read_manifest())
    config = TrainConfig.model_validate(manifest.config)
    vocab = Vocabulary.load(storage.path(VOCAB_FILENAME))
    seed = manifest.seed if manifest.seed is not None else 0
    streams = RngStreams(seed)
    model = FCMFModel(len(vocab), config.model, streams.stream("init"), config.ablation)
    model.load_state_dict(storage.get_tensors("params"))
    trainer = Trainer(model, config, seed, streams=streams)
    trainer.optimizer.m.update(storage.get_tensors("adam_m"))
    trainer.optimizer.v.update(storage.get_tensors("adam_v"))
    trainer.optimizer.step_count = int(manifest.optimizer.get("step_count", 0))
    streams.load_state_dict(manifest.rng_states)
    trainer.epoch = manifest.epoch
    trainer.history = list(manifest.history)
    return LoadedCheckpoint(trainer=trainer, vocab=vocab, manifest=manifest)


# Multi-seed driver


def build_vocabulary(samples: Sequence[MultimodalSample], ablation: AblationFlags) -> Vocabulary:
    return Vocabulary.build(sample_tokens(s, ablation) for s in samples)


def train(
    samples: Sequence[MultimodalSample],
    config: TrainConfig,
    store: FeatureStore,
    storage: StorageService,
    heads: CategoryHeads | None = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> SeedSummary:
    """Split, build the vocabulary, then train one model per seed

    Writes per seed: seed_<n>/manifest.json, seed_<n>/metrics.csv and seed_<n>/checkpoint/ (best dev epoch).
    Writes seed_summary.json with mean/std of dev and test macro-F1.
    """
    train_set, dev_set, test_set = split_dataset(samples, config.dev_fraction, config.test_fraction, config.split_seed)
    logger.info(f"Split {len(samples)} samples into {len(train_set)}/{len(dev_set)}/{len(test_set)} train/dev/test")
    vocab = build_vocabulary(train_set, config.ablation)

    def encode(subset: Sequence[MultimodalSample]) -> list[EncodedSample]:
        return encode_samples(subset, vocab, store, config.model, config.ablation, heads, threshold)

    train_enc, dev_enc, test_enc = encode(train_set), encode(dev_set), encode(test_set)

    results: list[SeedResult] = []
    for seed in config.seeds:
        seed_storage = storage.child(f"seed_{seed}")
        checkpoint_storage = seed_storage.child("checkpoint")
        # replaying this manifest through --config reruns this seed alone
        seed_config = config.model_copy(update={"seeds": [seed]}).model_dump(mode="json")
        seed_storage.write_manifest(
            RunManifest(command="train", seed=seed, config=seed_config, config_hash=stable_hash(seed_config))
        )

        streams = RngStreams(seed)
        model = FCMFModel(len(vocab), config.model, streams.stream("init"), config.ablation)
        trainer = Trainer(model, config, seed, streams=streams)
        logger.info(f"Seed {seed}: {model.num_parameters()} parameters, vocabulary {len(vocab)}")

        best_epoch, best_f1 = trainer.fit(
            train_enc, dev_enc, on_improve=lambda t: save_checkpoint(t, checkpoint_storage, vocab)
        )
        seed_storage.put_csv(
            "metrics.csv",
            METRICS_HEADER,
            ((m.epoch, m.split, repr(m.loss), repr(m.macro_p), repr(m.macro_r), repr(m.macro_f1)) for m in trainer.history),
        )
        test_f1 = None
        if test_enc:
            best = load_checkpoint(checkpoint_storage.root)
            _, test_report = best.trainer.evaluate(test_enc, split="test")
            test_f1 = test_report.macro_f1
        results.append(
            SeedResult(
                seed=seed,
                best_epoch=best_epoch,
                best_dev_f1=best_f1,
                test_f1=test_f1,
                checkpoint=str(checkpoint_storage.root),
            )
        )

    dev_scores = [r.best_dev_f1 for r in results]
    test_scores = [r.test_f1 for r in results if r.test_f1 is not None]
    summary = SeedSummary(
        seeds=results,
        mean_dev_f1=float(np.mean(dev_scores)),
        std_dev_f1=float(np.std(dev_scores)),
        mean_test_f1=float(np.mean(test_scores)) if test_scores else None,
        std_test_f1=float(np.std(test_scores)) if test_scores else None,
    )
    storage.put_json("seed_summary.json", summary)
    logger.info(f"Mean dev macro-F1 over {len(results)} seeds: {summary.mean_dev_f1:.4f} ± {summary.std_dev_f1:.4f}")
    return summary


__all__ = [
    "Batch",
    "EncodedSample",
    "LossOutput",
    "Trainer",
    "collate",
    "encode_sample",
    "encode_samples",
    "forward_loss",
    "load_checkpoint",
    "nll_loss",
    "save_checkpoint",
    "split_dataset",
    "train",
]
