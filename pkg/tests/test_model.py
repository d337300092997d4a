import math

import numpy as np
import pytest
import torch

from oracles import reference_forward, reference_nll, reference_regularizer
from songmass.align import AlignmentError, AlignmentPair
from songmass.model.attention import (
    DegenerateRowError,
    attention_regularizer,
    masked_attention,
    masked_softmax,
    sentence_mask,
    target_map,
)
from songmass.model.batch import mass_batch, paired_batch
from songmass.model.losses import NumericError, backward, forward_loss, total_loss
from songmass.model.train import make_batch
from songmass.model.transformer import MODES, SequenceTooLongError

from conftest import tiny_bundle


def mode_items(songs, mode):
    if mode == "lyric2lyric":
        return [s.lyric for s in songs]
    if mode == "melody2melody":
        return [s.melody for s in songs]
    return songs


def all_batches(bundle, songs, seed=1):
    return {m: make_batch(m, mode_items(songs, m), bundle, 0.5, seed) for m in MODES}


# --------------------------------------------------------------- attention


def test_sentence_mask_example():
    m = sentence_mask([0, 0, 1], [0, 1, 1])
    assert m[0].tolist() == [0.0, -math.inf, -math.inf]
    assert m[2].tolist() == [-math.inf, 0.0, 0.0]
    with pytest.raises(ValueError):
        sentence_mask([1, 0], [0, 1])


def test_masked_softmax_fully_masked_row_raises():
    with pytest.raises(DegenerateRowError):
        masked_softmax(torch.zeros(1, 2), torch.tensor([[-math.inf, -math.inf]]))


def test_masked_attention_matches_dual_implementation():
    rng = np.random.default_rng(0)
    for _ in range(20):
        M, N, d = rng.integers(1, 7), rng.integers(1, 7), 8
        tgt = np.sort(rng.integers(0, 3, M))
        src = np.sort(np.concatenate([np.arange(3), rng.integers(0, 3, N)]))
        h_dec, h_enc = rng.standard_normal((M, d)), rng.standard_normal((len(src), d))
        wq, wk = rng.standard_normal((d, d)), rng.standard_normal((d, d))
        A = masked_attention(h_dec, h_enc, sentence_mask(tgt, src), wq, wk).numpy()
        # dual: softmax restricted to the allowed columns, zeros elsewhere
        q, k = h_dec @ wq, h_enc @ wk
        for i in range(M):
            cols = np.flatnonzero(src == tgt[i])
            s = q[i] @ k[cols].T / math.sqrt(d)
            p = np.exp(s - s.max())
            expected = np.zeros(len(src))
            expected[cols] = p / p.sum()
            np.testing.assert_allclose(A[i], expected, atol=1e-12)
            assert np.all(A[i][src != tgt[i]] == 0.0)


def test_masked_positions_get_no_gradient():
    scores = torch.randn(3, 4, dtype=torch.float64, requires_grad=True)
    mask = sentence_mask([0, 0, 1], [0, 0, 1, 1])
    (masked_softmax(scores, mask) * torch.randn(3, 4, dtype=torch.float64)).sum().backward()
    assert torch.all(scores.grad[mask.isinf()] == 0)


def test_target_map_and_regularizer():
    u = target_map([AlignmentPair((1, 2), (1, 1)), AlignmentPair((3, 3), (2, 3))], 3, 3)
    assert u.tolist() == [[0.5, 0.5, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]
    assert float(attention_regularizer(u, u)) == 0.0
    A = torch.full((3, 3), 1 / 3, dtype=torch.float64)
    expected = float((A - u).abs().mean())
    assert float(attention_regularizer(A, u)) == pytest.approx(expected, abs=1e-15)
    assert float(attention_regularizer(A, u, squared=True)) == pytest.approx(float(((A - u) ** 2).mean()))
    with pytest.raises(AlignmentError):
        target_map([AlignmentPair((1, 1), (1, 1)), AlignmentPair((1, 1), (2, 2))], 2, 2)


# ----------------------------------------------------------- forward oracle


@pytest.mark.parametrize("mode", list(MODES))
def test_forward_loss_matches_reference(toy_songs, mode):
    bundle = tiny_bundle(toy_songs, seed=4)
    model = bundle.model
    batch = make_batch(mode, mode_items(toy_songs, mode), bundle, 0.5, 2)
    res = forward_loss(model, batch)

    total_nll, count, att = 0.0, 0, []
    for b, (t, s) in enumerate(batch.lengths()):
        args = [batch.src[b, :s].tolist(), batch.src_pos[b, :s].tolist(), batch.src_sent[b, :s].tolist(),
                batch.tgt_in[b, :t].tolist(), batch.tgt_pos[b, :t].tolist(), batch.tgt_sent[b, :t].tolist()]
        logits, A = reference_forward(model, mode, *args)
        total_nll += reference_nll(logits, batch.tgt_out[b, :t].tolist()) * t
        count += t
        np.testing.assert_allclose(res.attention[b], A, atol=1e-9)
        if batch.att_target is not None:
            att.append(reference_regularizer(A, batch.att_target[b, :t, :s].numpy(), args[5], args[2]))
    assert res.nll.item() == pytest.approx(total_nll / count, abs=1e-9)
    if batch.att_target is None:
        assert res.att is None
        assert res.loss.item() == pytest.approx(total_nll / count, abs=1e-9)
    else:
        assert res.att.item() == pytest.approx(np.mean(att), abs=1e-9)
        assert res.loss.item() == pytest.approx(total_nll / count + 0.5 * np.mean(att), abs=1e-9)


def test_alpha_zero_is_pure_nll(toy_songs):
    bundle = tiny_bundle(toy_songs, alpha=0.0)
    res = forward_loss(bundle.model, paired_batch("l2m", toy_songs, bundle.lyric_vocab, bundle.melody_vocab))
    assert res.att is not None
    assert res.loss.item() == res.nll.item()


def test_loss_additivity(toy_songs):
    bundle = tiny_bundle(toy_songs)
    batches = all_batches(bundle, toy_songs)
    parts = [forward_loss(bundle.model, b).loss.item() for b in batches.values()]
    assert total_loss(bundle.model, batches).item() == pytest.approx(sum(parts), abs=1e-9)


@pytest.mark.parametrize("mode", list(MODES))
def test_mode_routing_zero_gradients(toy_songs, mode):
    bundle = tiny_bundle(toy_songs)
    grads = backward(bundle.model, all_batches(bundle, toy_songs)[mode])
    src, tgt = MODES[mode]
    used = {f"{src}_encoder", f"{tgt}_decoder"}
    for name, g in grads.items():
        if name.split(".")[0] in used:
            continue
        assert torch.count_nonzero(g) == 0, name
    assert any(torch.count_nonzero(g) for n, g in grads.items() if n.startswith(f"{tgt}_decoder"))


def test_single_linear_softmax_gradient_closed_form():
    # d/dW of CE(softmax(W x), y) = (p - onehot(y)) x^T
    rng = np.random.default_rng(0)
    W = torch.tensor(rng.standard_normal((5, 3)), requires_grad=True)
    x = torch.tensor(rng.standard_normal(3))
    loss = torch.nn.functional.cross_entropy((W @ x)[None], torch.tensor([2]))
    loss.backward()
    p = torch.softmax(W.detach() @ x, 0).numpy()
    p[2] -= 1
    np.testing.assert_allclose(W.grad.numpy(), np.outer(p, x.numpy()), atol=1e-14)


def test_gradient_check_sampled_coordinates(toy_songs):
    """Central differences on a random sample of coordinates of every
    parameter tensor (the exhaustive check lives in the acceptance suite)."""
    bundle = tiny_bundle(toy_songs[:1], layers=1)
    model = bundle.model
    batches = all_batches(bundle, toy_songs[:1])
    grads = backward(model, batches)
    rng = np.random.default_rng(0)
    h = 1e-5
    with torch.no_grad():
        for name, p in model.named_parameters():
            flat = p.view(-1)
            for i in rng.choice(flat.numel(), size=min(4, flat.numel()), replace=False):
                old = flat[i].item()
                flat[i] = old + h
                up = total_loss(model, batches).item()
                flat[i] = old - h
                down = total_loss(model, batches).item()
                flat[i] = old
                num, ana = (up - down) / (2 * h), grads[name].view(-1)[i].item()
                assert abs(num - ana) / max(abs(num), abs(ana), 1e-6) < 1e-4, (name, i, num, ana)


def test_nonfinite_loss_raises(toy_songs):
    bundle = tiny_bundle(toy_songs)
    with torch.no_grad():
        bundle.model.lyric_encoder.embed.weight[6] = float("nan")
    batch = paired_batch("l2m", toy_songs, bundle.lyric_vocab, bundle.melody_vocab)
    with pytest.raises(NumericError):
        backward(bundle.model, batch)


def test_sequence_too_long(toy_songs):
    bundle = tiny_bundle(toy_songs, max_len=4)
    with pytest.raises(SequenceTooLongError):
        forward_loss(bundle.model, paired_batch("l2m", toy_songs, bundle.lyric_vocab, bundle.melody_vocab))


def test_mass_batch_targets_masked_tokens(toy_songs):
    bundle = tiny_bundle(toy_songs)
    seq = toy_songs[0].lyric
    batch = mass_batch("lyric2lyric", [seq], bundle.lyric_vocab, 0.5, 0)
    v = bundle.lyric_vocab
    positions = batch.tgt_pos[0].tolist()
    assert v.decode(batch.tgt_out[0].tolist()) == [seq.tokens[p] for p in positions]
    assert all(v.itos[batch.src[0, p]] == "[MASK]" for p in positions)
    with pytest.raises(ValueError):
        mass_batch("lyric2melody", [seq], v, 0.5, 0)
