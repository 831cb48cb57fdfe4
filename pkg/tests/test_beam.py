import itertools
import math

import numpy as np
import pytest
import torch

from mvlip.beam import DecodeConfig, Hypothesis, joint_beam_search, joint_score
from mvlip.model import LipReader, ModelConfig
from mvlip.vocab import Vocabulary

from oracles import ctc_outputs_by_enumeration


def small_vocab():
    # |V'| = 4: blank + two labels + combined sos/eos
    return Vocabulary(symbols=("[blank]", "V1", "V2", "[sos/eos]"))


def make_model(seed=0, scorer="additive", views=(0,)):
    torch.manual_seed(seed)
    cfg = ModelConfig(views=views, scorer=scorer, conv_channels=(2,),
                      cell_size=3, att_dim=2, emb_dim=2, dropout=0.0)
    model = LipReader(cfg, vocab=small_vocab())
    model.eval()
    return model


def make_frames(seed, views=(0,), T=3):
    rng = np.random.default_rng(seed)
    return {a: rng.random((T, 8, 8, 1)).astype(np.float32) for a in views}


def attention_chain_logp(model, enc, labels):
    """Independent teacher-forced walk: log p_att(labels) including eos."""
    eos = model.vocab.sos_eos_id
    state, pw = model.initial_decoder_state(enc)
    total = 0.0
    prev = eos
    with torch.no_grad():
        for c in list(labels) + [eos]:
            logp, state, pw, _ = model.decode_step(prev, state, enc, pw)
            total += float(logp.double()[c])
            prev = c
    return total


def enumerate_argmax(model, enc, lam, max_labels):
    """Brute-force Eq-style joint scoring over every label sequence."""
    vocab = model.vocab
    classes = [i for i in range(vocab.size)
               if i not in (vocab.blank_id, vocab.sos_eos_id)]
    with torch.no_grad():
        log_post = model.ctc_log_posteriors(enc).double().numpy()
    ctc_table = ctc_outputs_by_enumeration(log_post, blank=vocab.blank_id)
    best_y, best_score = None, -math.inf
    for L in range(max_labels + 1):
        for y in itertools.product(classes, repeat=L):
            att = attention_chain_logp(model, enc, y)
            if lam > 0.0:
                p = ctc_table.get(tuple(y), 0.0)
                ctc = math.log(p) if p > 0 else -math.inf
            else:
                ctc = 0.0
            score = joint_score(ctc, att, lam)
            if score > best_score:
                best_y, best_score = y, score
    return best_y, best_score


class TestJointScore:
    def test_linear_combination(self):
        assert joint_score(-2.0, -1.0, 0.3) == pytest.approx(-1.3)

    def test_hypothesis_invariants(self):
        h = Hypothesis(labels=(1,), att_logp=-1.0, ctc_prefix_logp=-2.0,
                       joint=joint_score(-2.0, -1.0, 0.3))
        assert h.att_logp <= 0 and h.ctc_prefix_logp <= 0
        assert h.joint == pytest.approx(0.3 * -2.0 + 0.7 * -1.0)


class TestAgainstExhaustiveEnumeration:
    @pytest.mark.parametrize("lam", [0.0, 0.3, 1.0])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_exhaustive_beam_matches_enumeration(self, lam, seed):
        model = make_model(seed=seed)
        frames = make_frames(seed)
        enc = model.encode(frames)
        T = enc.num_frames
        # beam wide enough that nothing is ever pruned: 2^3 = 8 leaves
        cfg = DecodeConfig(beam_width=16, ctc_weight=lam, max_steps=T)
        hyp_syms, _, best = joint_beam_search(model, enc, cfg)
        exp_y, exp_score = enumerate_argmax(model, enc, lam, T)
        assert tuple(model.vocab.id_of(s) for s in hyp_syms) == exp_y
        assert best.joint == pytest.approx(exp_score, abs=1e-6)

    def test_eos_uses_complete_ctc_score(self):
        model = make_model(seed=4)
        enc = model.encode(make_frames(4))
        cfg = DecodeConfig(beam_width=16, ctc_weight=1.0, max_steps=enc.num_frames)
        _, _, best = joint_beam_search(model, enc, cfg)
        with torch.no_grad():
            log_post = model.ctc_log_posteriors(enc).double().numpy()
        table = ctc_outputs_by_enumeration(log_post, blank=0)
        assert best.ctc_prefix_logp == pytest.approx(
            math.log(table[tuple(best.labels)]), abs=1e-9
        )


class TestBeamBehavior:
    def test_beam_one_equals_greedy(self):
        model = make_model(seed=5)
        enc = model.encode(make_frames(5))
        cfg = DecodeConfig(beam_width=1, ctc_weight=0.3)
        hyp, _, _ = joint_beam_search(model, enc, cfg)

        # greedy walk: keep the single best (non-ended) candidate per step
        lam = 0.3
        from mvlip.ctc import CTCPrefixScorer
        with torch.no_grad():
            log_post = model.ctc_log_posteriors(enc).double().numpy()
        scorer = CTCPrefixScorer(log_post, blank=model.vocab.blank_id)
        state, pw = model.initial_decoder_state(enc)
        ctc_state = scorer.initial_state()
        labels, att = [], 0.0
        ended = []
        prev = model.vocab.sos_eos_id
        with torch.no_grad():
            for step in range(enc.num_frames + 1):
                logp, new_state, new_pw, _ = model.decode_step(prev, state, enc, pw)
                lp = logp.double().numpy()
                ended.append(
                    (joint_score(scorer.complete(ctc_state), att + lp[-1], lam),
                     tuple(labels))
                )
                if step == enc.num_frames:
                    break
                cands = []
                for c in (1, 2):
                    st, pref = scorer.extend(ctc_state, c)
                    cands.append((joint_score(pref, att + lp[c], lam), c, st))
                cands.sort(key=lambda x: -x[0])
                _, c, ctc_state = cands[0]
                att += lp[c]
                labels.append(c)
                state, pw, prev = new_state, new_pw, c
        best_greedy = max(ended, key=lambda e: e[0])
        assert tuple(model.vocab.id_of(s) for s in hyp) == best_greedy[1]

    @pytest.mark.parametrize("seed", [0, 3, 7])
    def test_wider_beam_never_scores_worse(self, seed):
        model = make_model(seed=seed)
        enc = model.encode(make_frames(seed, T=4))
        scores = []
        for width in (1, 2, 3, 5, 8, 16):
            cfg = DecodeConfig(beam_width=width, ctc_weight=0.3)
            _, _, best = joint_beam_search(model, enc, cfg)
            scores.append(best.joint)
        assert all(b >= a - 1e-12 for a, b in zip(scores, scores[1:]))

    def test_trace_steps_match_labels(self):
        model = make_model(seed=6)
        enc = model.encode(make_frames(6, T=4))
        hyp, trace, best = joint_beam_search(model, enc, DecodeConfig(beam_width=4))
        assert trace.num_steps == len(hyp)
        for u in range(trace.num_steps):
            for v in range(len(trace.angles)):
                assert trace.temporal[u][v].sum() == pytest.approx(1.0, abs=1e-6)
            assert trace.view_weights[u].sum() == pytest.approx(1.0, abs=1e-6)

    def test_multiview_decode(self):
        model = make_model(seed=8, views=(0, 90))
        enc = model.encode(make_frames(8, views=(0, 90)))
        hyp, trace, _ = joint_beam_search(model, enc, DecodeConfig(beam_width=3))
        assert trace.angles == [0, 90]

    def test_empty_encoder_output_rejected(self):
        model = make_model(seed=9)
        enc = model.encode(make_frames(9))
        enc.features[0] = enc.features[0][:0]
        with pytest.raises(ValueError, match="empty"):
            joint_beam_search(model, enc, DecodeConfig())

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            DecodeConfig(beam_width=0)
        with pytest.raises(ValueError):
            DecodeConfig(ctc_weight=1.5)
