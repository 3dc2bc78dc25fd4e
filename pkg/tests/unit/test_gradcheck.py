"""Unit Tests for Backward Rules

Every kernel and the fusion path are checked against central differences; a
deliberately broken rule must be caught and gradients of summed losses must add.
"""

import numpy as np
import pytest

from fcmf.exceptions import NonFiniteError
from fcmf.models.fusion import (
    FusionClassifier,
    GeometricRoIAttention,
    ImageGuidedAttention,
    ObjectRelation,
    geometric_roi_attention,
    image_guided_attention,
)
from fcmf.numerics import functional as F
from fcmf.numerics.attention import scaled_dot_attention
from fcmf.numerics.gradcheck import grad_check
from fcmf.numerics.tensor import Tensor
from fcmf.schemas.config import GradCheckConfig, ModelConfig
from fcmf.services.diagnostics_service import build_problem
from fcmf.services.training_service import forward_loss

pytestmark = pytest.mark.unit

EPS = 1e-5
TOL = 1e-4


def param(rng, *shape, name="p"):
    return Tensor(rng.normal(size=shape), requires_grad=True, name=name)


def weighted(out: Tensor, rng) -> Tensor:
    """Scalarise through fixed random weights so every output coordinate matters"""
    return F.sum(F.mul(out, rng.normal(size=out.shape)))


class TestSumOfSquares:
    """Test the analytic gradient of sum(x²)"""

    def test_gradient_is_two_x(self):
        x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
        F.sum(F.mul(x, x)).backward()
        assert np.allclose(x.grad, [2.0, -4.0, 6.0], rtol=0, atol=1e-12)

    def test_passes_grad_check(self):
        x = Tensor([1.0, -2.0, 3.0], requires_grad=True, name="x")
        report = grad_check(lambda: F.sum(F.mul(x, x)), [x], eps=EPS, tol=TOL)
        assert report.passed
        assert report.checked == 3

    def test_backward_accumulates_into_leaves(self):
        x = Tensor([2.0], requires_grad=True)
        F.sum(F.mul(x, 3.0)).backward()
        F.sum(F.mul(x, 3.0)).backward()
        assert x.grad.tolist() == [6.0]


class TestKernelGradients:
    """Test each kernel's backward rule"""

    @pytest.mark.parametrize(
        "name, build",
        [
            ("add", lambda r, a: F.add(a, r.normal(size=(3, 4)))),
            ("sub", lambda r, a: F.sub(r.normal(size=(4,)), a)),
            ("mul", lambda r, a: F.mul(a, a)),
            ("div", lambda r, a: F.div(a, F.add(F.mul(a, a), 1.0))),
            ("exp", lambda r, a: F.exp(a)),
            ("log", lambda r, a: F.log(F.add(F.mul(a, a), 0.5))),
            ("relu", lambda r, a: F.relu(F.add(a, 0.05))),
            ("sigmoid", lambda r, a: F.sigmoid(a)),
            ("sum", lambda r, a: F.sum(a, axis=0, keepdims=True)),
            ("mean", lambda r, a: F.mean(a, axis=-1)),
            ("reshape", lambda r, a: F.reshape(a, (4, 3))),
            ("transpose", lambda r, a: F.transpose(a)),
            ("getitem", lambda r, a: a[1:, ::2]),
            ("take", lambda r, a: F.take(a, [0, 2, 2], axis=0)),
            ("concat", lambda r, a: F.concat([a, F.mul(a, 2.0)], axis=1)),
            ("stack", lambda r, a: F.stack([a, a], axis=0)),
            ("matmul", lambda r, a: F.matmul(a, r.normal(size=(4, 2)))),
            ("softmax", lambda r, a: F.softmax(a, axis=-1)),
            ("log_softmax", lambda r, a: F.log_softmax(a, axis=0)),
            ("layernorm", lambda r, a: F.layernorm(a)),
            ("broadcast_to", lambda r, a: F.broadcast_to(a[0], (2, 4))),
            ("clamp_min", lambda r, a: F.clamp_min(a, -10.0)),
        ],
    )
    def test_kernel(self, rng, name, build):
        a = param(rng, 3, 4, name="a")

        # fresh generators per call so constants stay fixed across perturbations
        def loss():
            return weighted(build(np.random.default_rng(5), a), np.random.default_rng(11))

        report = grad_check(loss, [a], eps=EPS, tol=TOL)
        assert report.passed, f"{name}: {report.failures[:3]}"

    def test_linear(self, rng):
        x, w, b = param(rng, 2, 3, 3, name="x"), param(rng, 5, 3, name="w"), param(rng, 5, name="b")
        report = grad_check(lambda: weighted(F.linear(x, w, b), np.random.default_rng(1)), [x, w, b])
        assert report.passed

    def test_layernorm_affine(self, rng):
        x, g, b = param(rng, 4, 6, name="x"), param(rng, 6, name="g"), param(rng, 6, name="b")
        report = grad_check(lambda: weighted(F.layernorm(x, g, b), np.random.default_rng(2)), [x, g, b])
        assert report.passed

    def test_pick(self, rng):
        x = param(rng, 4, 3, name="x")
        report = grad_check(lambda: F.sum(F.pick(F.log_softmax(x), [0, 2, 1, 1])), [x])
        assert report.passed

    def test_attention_with_mask_and_bias(self, rng):
        q, k, v = param(rng, 2, 3, 4, name="q"), param(rng, 2, 5, 4, name="k"), param(rng, 2, 5, 4, name="v")
        bias = param(rng, 2, 1, 3, 5, name="bias")
        mask = np.zeros((2, 5), dtype=bool)
        mask[1, 3:] = True

        def loss():
            out = scaled_dot_attention(q, k, v, mask=mask, heads=2, bias=bias)
            return weighted(out, np.random.default_rng(3))

        report = grad_check(loss, {"q": q, "k": k, "v": v, "bias": bias}, n_samples=200)
        assert report.passed
        assert report.max_rel_error <= TOL


class TestGradCheckDetection:
    """Test that grad_check catches mistakes"""

    def test_corrupted_backward_rule_fails(self, rng):
        x = param(rng, 3, name="x")

        def broken_square(a: Tensor) -> Tensor:
            # d(a²)/da written as a instead of 2a
            return Tensor.from_op(a.data * a.data, (a,), lambda g: (g * a.data,), "broken_square")

        report = grad_check(lambda: F.sum(broken_square(x)), [x], eps=EPS, tol=TOL)
        assert not report.passed
        assert report.failures[0].param == "x"

    def test_linear_function_has_exact_gradient(self, rng):
        x = param(rng, 6, name="x")
        c = rng.normal(size=6)
        report = grad_check(lambda: F.sum(F.mul(x, c)), [x], eps=EPS, tol=TOL)
        assert report.passed
        assert report.max_rel_error < 1e-8

    def test_samples_subset_of_coordinates(self, rng):
        x = param(rng, 10, 10, name="x")
        report = grad_check(lambda: F.sum(F.mul(x, x)), [x], n_samples=7)
        assert report.checked == 7

    def test_non_finite_loss_names_kernel(self):
        x = Tensor([0.0, 1.0], requires_grad=True, name="x")
        with pytest.raises(NonFiniteError, match="log"):
            grad_check(lambda: F.sum(F.log(x)), [x])


class TestBackwardLinearity:
    """Test that the gradient of a sum of losses is the sum of their gradients"""

    def test_two_toy_batches(self):
        config = GradCheckConfig()
        problem = build_problem(config)
        other = build_problem(config.model_copy(update={"seed": 1})).batch
        params = problem.model.named_parameters()

        def gradients(*batches):
            for p in params.values():
                p.zero_grad()
            losses = [forward_loss(problem.model, batch).loss for batch in batches]
            total = losses[0]
            for loss in losses[1:]:
                total = F.add(total, loss)
            total.backward()
            return {name: np.zeros_like(p.data) if p.grad is None else p.grad.copy() for name, p in params.items()}

        a = gradients(problem.batch)
        b = gradients(other)
        both = gradients(problem.batch, other)
        assert any(np.any(g != 0.0) for g in a.values())
        for name in params:
            assert np.allclose(both[name], a[name] + b[name], rtol=1e-9, atol=1e-12), name

    def test_successive_backward_passes_accumulate(self):
        problem = build_problem(GradCheckConfig())
        params = problem.model.named_parameters()
        forward_loss(problem.model, problem.batch).loss.backward()
        once = {name: p.grad.copy() for name, p in params.items() if p.grad is not None}
        forward_loss(problem.model, problem.batch).loss.backward()
        for name, grad in once.items():
            assert np.allclose(params[name].grad, 2.0 * grad, rtol=1e-12, atol=1e-15), name


class TestFusionPathGradients:
    """Test central differences through the image, relation, RoI and fusion blocks together"""

    def test_six_tokens_two_images_two_rois(self, rng):
        config = ModelConfig(hidden_size=8, heads=2, geometry_dim=8, k_max=2, j_max=2, dropout=0.0)
        cm = ImageGuidedAttention(config, rng)
        relation = ObjectRelation(8, 2, 8, 0.0, rng)
        roi = GeometricRoIAttention(config, rng)
        head = FusionClassifier(config, rng)
        h_t, grids, v_r = param(rng, 6, 8, name="h_t"), param(rng, 2, 3, 8, name="grids"), param(rng, 2, 2, 8, name="v_r")
        text_mask = np.array([False] * 5 + [True])
        image_mask = np.zeros(2, dtype=bool)
        roi_mask = np.array([[False, False], [False, True]])
        boxes = np.array([[[0.1, 0.1, 0.3, 0.4], [0.5, 0.2, 0.3, 0.3]], [[0.2, 0.5, 0.4, 0.3], [0.0, 0.0, 0.0, 0.0]]])

        params = {"h_t": h_t, "grids": grids, "v_r": v_r}
        for prefix, block in (("cm", cm), ("relation", relation), ("roi", roi), ("head", head)):
            block.eval()
            params.update({f"{prefix}.{name}": p for name, p in block.named_parameters().items()})

        def loss():
            h_i = image_guided_attention(h_t, grids, image_mask, cm)
            h_o = relation(v_r, boxes, roi_mask)
            h_r = geometric_roi_attention(h_t, text_mask, h_o, roi_mask, image_mask, roi)
            logits = head(F.reshape(h_t[0], (1, 8)), F.reshape(h_i, (1, 2, 8)), F.reshape(h_r, (1, 2, 8)), image_mask[None])
            return F.sum(F.pick(F.log_softmax(logits, axis=-1), [2]))

        report = grad_check(loss, params, eps=EPS, tol=TOL, n_samples=200)
        assert report.passed, report.failures[:3]
        assert report.max_rel_error <= TOL
