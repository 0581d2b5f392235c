//! Acceptance suite: one test per criterion, each printing a final
//! `ACCEPTANCE <n> PASS` line with its elapsed time.
//!
//! Run `cargo test --test acceptance -- --nocapture` to see every line.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use evolm::analysis::{calibrated_loss, cox_snell_r2, fit_gamma_glm, generation_summary, overfit_weight};
use evolm::corpus::split_text;
use evolm::corpus::LanguageProfile;
use evolm::evolve::{
    continuous_step, mutate_traced, random_chromosome, run_evolution, ArchCostModel,
    EvolutionConfig, GeneGroup, MockFitness, NullSink, SearchSpace, TrainFitness,
};
use evolm::model::{
    lr_at, train_gpt, Chromosome, GeneBounds, Gpt, GptConfig, TrainConfig,
};
use evolm::tokenizer::{token_entropy, train_bpe, train_character_tokenizer, TokenizedCorpus};

fn pass(criterion: usize, started: Instant, what: &str) {
    println!(
        "ACCEPTANCE {criterion:02} PASS ({:.2}s): {what}",
        started.elapsed().as_secs_f64()
    );
}

fn random_string(alphabet: &[char], len: usize, rng: &mut ChaCha8Rng) -> String {
    (0..len)
        .map(|_| alphabet[rng.random_range(0..alphabet.len())])
        .collect()
}

// Criterion 1: decode(encode(s)) = s for 1,000 random strings over each
// training alphabet, character and BPE tokenizers, exact.
#[test]
fn acceptance_01_tokenizer_round_trip() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);

    let char_alphabet: Vec<char> = "abcdefgh :=.\n()".chars().collect();
    let training_text = random_string(&char_alphabet, 4000, &mut rng);
    let char_tok = train_character_tokenizer(&training_text).unwrap();
    for i in 0..1000 {
        let s = random_string(&char_alphabet, 1 + (i % 64), &mut rng);
        let ids = char_tok.encode(&s).unwrap();
        assert_eq!(char_tok.decode(&ids).unwrap(), s, "character round trip");
    }

    let bpe_alphabet: Vec<char> = "abcdefgh".chars().collect();
    let bpe_text = random_string(&bpe_alphabet, 3000, &mut rng);
    let bpe_tok = train_bpe(&bpe_text, bpe_alphabet.len() + 40).unwrap();
    for i in 0..1000 {
        let s = random_string(&bpe_alphabet, 1 + (i % 64), &mut rng);
        let ids = bpe_tok.encode(&s).unwrap();
        assert_eq!(bpe_tok.decode(&ids).unwrap(), s, "BPE round trip");
    }

    pass(1, started, "character and BPE round trips exact on 1000 random strings each");
}

// Criterion 2: token_entropy matches an independent histogram oracle within
// 1e-12 on 100 random streams; a uniform 2^k-symbol stream yields exactly k
// bits.
#[test]
fn acceptance_02_entropy_oracle() {
    let started = Instant::now();

    // independent oracle: sort-and-run-length instead of hash counting
    fn entropy_oracle(ids: &[u32]) -> f64 {
        let mut sorted = ids.to_vec();
        sorted.sort_unstable();
        let n = sorted.len() as f64;
        let mut bits = 0.0;
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let p = (j - i + 1) as f64 / n;
            bits -= p * p.log2();
            i = j + 1;
        }
        bits
    }

    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for trial in 0..100 {
        let len = 100 + rng.random_range(0..100_000);
        let symbols = 2 + rng.random_range(0..62);
        let ids: Vec<u32> = (0..len).map(|_| rng.random_range(0..symbols)).collect();
        let got = token_entropy(&ids).unwrap();
        let want = entropy_oracle(&ids);
        assert!(
            (got - want).abs() < 1e-12,
            "trial {trial}: {got} vs oracle {want}"
        );
    }

    for k in 0..=6u32 {
        let symbols = 1u32 << k;
        let ids: Vec<u32> = (0..symbols * 64).map(|i| i % symbols).collect();
        let got = token_entropy(&ids).unwrap();
        assert_eq!(got, k as f64, "uniform over 2^{k} symbols must be exactly {k} bits");
    }

    pass(2, started, "entropy matches histogram oracle within 1e-12; uniform 2^k streams exact");
}

// Criterion 3: calibration identities — parity returns Lv exactly; the
// overfitting penalty depends only on |Lv/Lt - 1|; weight x penalty = 1.
#[test]
fn acceptance_03_calibration_identities() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);

    for _ in 0..10_000 {
        let lt = 0.05 + rng.random::<f64>() * 9.95;
        // keep the ratio inside the representable range of exp(d^2): past
        // |d| ~ 26.6 the penalty overflows while the weight underflows
        let lv = lt * (0.05 + rng.random::<f64>() * 19.95);
        let h = 0.1 + rng.random::<f64>() * 9.9;
        // parity: both adjustments are the identity, bitwise
        assert_eq!(calibrated_loss(lv, lv, h, h).unwrap(), lv);
        // weight x penalty = 1 (two exp() evaluations, so up to ~2 ulp)
        let w = overfit_weight(lv, lt).unwrap();
        let penalty = calibrated_loss(lv, lt, 1.0, 1.0).unwrap() / lv;
        assert!(
            (w * penalty - 1.0).abs() < 1e-12,
            "weight*penalty = {} for ({lv}, {lt})",
            w * penalty
        );
    }

    // symmetric deviations: ratios 1-d and 1+d share the amplification
    // factor. The weight exposes the factor without a multiply/divide round
    // trip, so for exact (dyadic) deviations the symmetry is bitwise.
    for i in 1..=512u32 {
        let d = i as f64 / 1024.0;
        let w_lo = overfit_weight(1.0 - d, 1.0).unwrap();
        let w_hi = overfit_weight(1.0 + d, 1.0).unwrap();
        assert_eq!(w_lo, w_hi, "penalty asymmetric at deviation {d}");
        // and through the full calibration, up to one rounding each way
        let lo = calibrated_loss(1.0 - d, 1.0, 1.0, 1.0).unwrap() / (1.0 - d);
        let hi = calibrated_loss(1.0 + d, 1.0, 1.0, 1.0).unwrap() / (1.0 + d);
        assert!((lo - hi).abs() <= 4.0 * f64::EPSILON * hi, "at deviation {d}: {lo} vs {hi}");
    }
    // the published example pair: the 0.8 and 1.2 ratios deviate from 1 by
    // the same representable amount
    assert_eq!(
        overfit_weight(0.8, 1.0).unwrap(),
        overfit_weight(1.2, 1.0).unwrap()
    );

    pass(3, started, "Eq-1 parity exact, penalty symmetric in the ratio deviation, weight*penalty = 1");
}

// Criterion 4: 10^5 mutations never leave the Table-3 bounds; the
// learning-rate step magnitude is exactly (1e-3 - 1e-4)/20; only the chosen
// gene group differs.
#[test]
fn acceptance_04_mutation_contract() {
    let started = Instant::now();
    let space = SearchSpace::table3(u64::MAX).unwrap();
    let bounds = GeneBounds::default();
    let lr_step = continuous_step(bounds.learning_rate);
    assert_eq!(lr_step, (1e-3 - 1e-4) / 20.0);
    assert!((lr_step - 4.5e-5).abs() < 1e-19, "step {lr_step}");

    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut lr_moves = 0usize;
    for _ in 0..100_000 {
        let c = random_chromosome(&space, &mut rng);
        let (m, group) = mutate_traced(&c, &space, &mut rng);
        m.validate(&bounds).expect("mutant violates Table 3 bounds");

        // all groups except the chosen one must be bitwise unchanged
        if group != GeneGroup::Architecture {
            assert_eq!((m.n_layer, m.n_head, m.n_embd), (c.n_layer, c.n_head, c.n_embd));
        }
        if group != GeneGroup::BatchSize {
            assert_eq!(m.batch_size, c.batch_size);
        }
        if group != GeneGroup::BlockSize {
            assert_eq!(m.block_size, c.block_size);
        }
        macro_rules! same_unless {
            ($field:ident, $g:expr) => {
                if group != $g {
                    assert!(m.$field.to_bits() == c.$field.to_bits());
                }
            };
        }
        same_unless!(dropout, GeneGroup::Dropout);
        same_unless!(learning_rate, GeneGroup::LearningRate);
        same_unless!(min_lr, GeneGroup::MinLr);
        same_unless!(beta1, GeneGroup::Beta1);
        same_unless!(beta2, GeneGroup::Beta2);
        same_unless!(weight_decay, GeneGroup::WeightDecay);

        if group == GeneGroup::LearningRate && m.learning_rate != c.learning_rate {
            let diff = (m.learning_rate - c.learning_rate).abs();
            let clipped = m.learning_rate == bounds.learning_rate.0
                || m.learning_rate == bounds.learning_rate.1;
            // the step applied is exactly the formula value; the observable
            // difference carries one rounding of the addition
            let ulp = f64::EPSILON * c.learning_rate.abs();
            assert!(
                (diff - lr_step).abs() <= ulp || clipped,
                "lr moved by {diff}, expected {lr_step} or a clip to a bound"
            );
            if !clipped {
                lr_moves += 1;
            }
        }
    }
    assert!(lr_moves > 5_000, "only {lr_moves} unclipped lr steps observed");

    pass(4, started, "100k mutations in-bounds, lr step exactly (1e-3 - 1e-4)/20, one gene group per mutation");
}

// Criterion 5: genetic-algorithm convergence on a deterministic convex mock
// fitness over (dropout, learning_rate): 25 generations x 20 individuals
// with elitism; best fitness monotone non-increasing (exact); final best
// within 2 mutation steps of the optimum in at least 19 of 20 seeded runs.
#[test]
fn acceptance_05_ga_convergence_on_mock_fitness() {
    let started = Instant::now();
    let space = SearchSpace::desk_scale().unwrap();
    let mock = MockFitness::default();
    let dropout_step = continuous_step(GeneBounds::default().dropout);
    let lr_step = continuous_step(GeneBounds::default().learning_rate);

    let mut hits = 0;
    for seed in 0..20u64 {
        let cfg = EvolutionConfig {
            n_generations: 25,
            population_size: 20,
            elite_percent: 0.2,
            crossover_probability: 0.6,
            mutation_probability: 0.9,
            max_iters: 0,
            seed: 500 + seed,
            elitism: true,
        };
        let sim = run_evolution(&cfg, &space, "mock", "character", &mock, &mut NullSink).unwrap();

        let bests: Vec<f64> = sim
            .generations
            .iter()
            .map(|g| g.best().1.best_val_loss)
            .collect();
        for w in bests.windows(2) {
            assert!(w[1] <= w[0], "elitism broke monotonicity: {bests:?}");
        }

        let final_best = &sim.generations.last().unwrap().best().1.chromosome;
        let close_dropout = (final_best.dropout - mock.dropout_target).abs() <= 2.0 * dropout_step + 1e-12;
        let close_lr = (final_best.learning_rate - mock.lr_target).abs() <= 2.0 * lr_step + 1e-12;
        if close_dropout && close_lr {
            hits += 1;
        }
    }
    assert!(hits >= 19, "only {hits}/20 runs converged within 2 mutation steps");

    pass(5, started, &format!("GA converged within 2 mutation steps in {hits}/20 seeded runs, best fitness monotone"));
}

// Criterion 6: analytic gradients of the tiny transformer (2 layers, 2
// heads, 16 dims) match central finite differences with relative error
// below 1e-4 on 100 sampled parameters.
#[test]
fn acceptance_06_gradient_check() {
    let started = Instant::now();
    let vocab = 11;
    let cfg = GptConfig {
        vocab_size: vocab,
        n_layer: 2,
        n_head: 2,
        n_embd: 16,
        block_size: 8,
    };
    let mut model = Gpt::new(cfg, 0.0, 606).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(607);
    let ids = Array2::from_shape_fn((2, 8), |_| rng.random_range(0..vocab));
    let targets = Array2::from_shape_fn((2, 8), |_| rng.random_range(0..vocab));
    model.loss_and_grad(&ids, &targets, None);

    let n = model.param_count();
    let h = 1e-5;
    let mut max_rel: f64 = 0.0;
    for _ in 0..100 {
        let i = rng.random_range(0..n);
        let analytic = model.grad_at(i);
        model.param_add(i, h);
        let up = model.loss_eval(&ids, &targets);
        model.param_add(i, -2.0 * h);
        let down = model.loss_eval(&ids, &targets);
        model.param_add(i, h);
        let numeric = (up - down) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
        assert!(rel < 1e-4, "param {i}: analytic {analytic} vs numeric {numeric}");
    }

    pass(6, started, &format!("100 sampled parameters, max relative error {max_rel:.2e} < 1e-4"));
}

fn char_corpus(name: &str, text: &str) -> TokenizedCorpus {
    let split = split_text(text, 0.8).unwrap();
    let tok = train_character_tokenizer(text).unwrap();
    TokenizedCorpus::build(name, &tok, &split).unwrap()
}

// Criterion 7: training sanity — an n_embd=32 model on a ~1 KB repeating
// corpus for 500 iterations starts within 10% of ln(vocab) and at least
// halves its training loss.
#[test]
fn acceptance_07_training_sanity() {
    let started = Instant::now();
    let text = "the quick brown fox jumps over the lazy dog. ".repeat(23); // ~1 KB
    let data = char_corpus("sanity", &text);

    let chrom = Chromosome {
        n_layer: 2,
        n_head: 4,
        n_embd: 32,
        batch_size: 8,
        block_size: 16,
        dropout: 0.0,
        learning_rate: 1e-3,
        min_lr: 1e-4,
        beta1: 0.9,
        beta2: 0.95,
        weight_decay: 0.0,
    };
    let mut cfg = TrainConfig::new(500, 707);
    cfg.eval_iters = 100;
    cfg.n_boot = 8;
    let record = train_gpt(&chrom, &data, &cfg).unwrap();
    assert!(!record.diverged);

    let initial = record.checkpoints.first().unwrap().train_loss;
    let uniform = (data.vocab_size as f64).ln();
    assert!(
        (initial - uniform).abs() / uniform < 0.10,
        "initial loss {initial} not within 10% of ln(vocab) = {uniform}"
    );
    let final_loss = record.checkpoints.last().unwrap().train_loss;
    assert!(
        final_loss < 0.5 * initial,
        "train loss {initial} -> {final_loss} did not halve in 500 iters"
    );

    pass(7, started, &format!("init {initial:.3} ~ ln({}) = {uniform:.3}; final {final_loss:.3} < 50%", data.vocab_size));
}

// Criterion 8: schedule endpoints — learning_rate at warmup_iters, min_lr at
// lr_decay_iters, the midpoint mean at the cosine midpoint, within 1e-12.
#[test]
fn acceptance_08_schedule_endpoints() {
    let started = Instant::now();
    let chrom = Chromosome::small(16, 8);
    let cfg = TrainConfig::new(1000, 0); // warmup 500, decay 1000

    let at_warmup = lr_at(cfg.warmup_iters, &chrom, &cfg);
    assert!((at_warmup - chrom.learning_rate).abs() < 1e-12);
    let at_decay = lr_at(cfg.lr_decay_iters, &chrom, &cfg);
    assert!((at_decay - chrom.min_lr).abs() < 1e-12);
    let mid = (cfg.warmup_iters + cfg.lr_decay_iters) / 2;
    let at_mid = lr_at(mid, &chrom, &cfg);
    assert!((at_mid - (chrom.learning_rate + chrom.min_lr) / 2.0).abs() < 1e-12);

    pass(8, started, "warmup endpoint, decay endpoint and cosine midpoint within 1e-12");
}

// Criterion 9: GLM oracles — intercept-only Gamma log-link recovers the
// sample mean within 1e-8; Monte Carlo coefficient recovery covers each true
// coefficient in at least 90 of 100 replications; Cox-Snell is 0 at equal
// likelihoods.
#[test]
fn acceptance_09_glm_oracles() {
    let started = Instant::now();

    let y = Array1::from_vec(vec![0.31, 2.7, 1.05, 4.2, 0.88, 1.61, 2.02, 3.3, 0.5, 1.9]);
    let ones = Array2::ones((y.len(), 1));
    let fit = fit_gamma_glm(&ones, &y, None, "y", &["Intercept".to_string()]).unwrap();
    let mean = y.sum() / y.len() as f64;
    assert!(
        (fit.coefficients[0].exp() - mean).abs() < 1e-8,
        "exp(b0) {} vs mean {mean}",
        fit.coefficients[0].exp()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let shape = 2.0;
    let gamma = rand_distr::Gamma::new(shape, 1.0).unwrap();
    let n = 5000;
    let names = vec!["Intercept".to_string(), "x".to_string()];
    let (mut cover0, mut cover1) = (0, 0);
    for _ in 0..100 {
        let mut x = Array2::ones((n, 2));
        let mut yy = Array1::zeros(n);
        for i in 0..n {
            let xi = rng.random::<f64>() * 2.0 - 1.0;
            x[[i, 1]] = xi;
            yy[i] = gamma.sample(&mut rng) * (1.0 + 0.5 * xi).exp() / shape;
        }
        let fit = fit_gamma_glm(&x, &yy, None, "y", &names).unwrap();
        if fit.ci95[0].0 <= 1.0 && 1.0 <= fit.ci95[0].1 {
            cover0 += 1;
        }
        if fit.ci95[1].0 <= 0.5 && 0.5 <= fit.ci95[1].1 {
            cover1 += 1;
        }
    }
    assert!(cover0 >= 90, "intercept coverage {cover0}/100");
    assert!(cover1 >= 90, "slope coverage {cover1}/100");

    assert_eq!(cox_snell_r2(17.3, 17.3, 250), 0.0);

    pass(9, started, &format!("intercept-only mean exact to 1e-8; CI coverage {cover0}/{cover1} per 100; Cox-Snell 0 at parity"));
}

// Criterion 10: end-to-end mini-benchmark — a low-entropy templated corpus
// and a high-entropy near-random corpus run tokenize -> evolve (3
// generations x 4 individuals, 300 iters, character tokenization) ->
// analyze; the low-entropy corpus attains strictly lower mean calibrated
// loss in the final generation in at least 9 of 10 seeded runs.
#[test]
fn acceptance_10_discriminates_corpus_learnability() {
    let started = Instant::now();

    let low_text = "theorem add_zero (n : Nat) : n + 0 = n := by simp\n".repeat(80); // ~4 KB
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let alphabet: Vec<char> = "abcdefghijklmnopqrstuvwxyz0123456789+=:(){}<>".chars().collect();
    let high_text: String = (0..low_text.chars().count())
        .map(|_| alphabet[rng.random_range(0..alphabet.len())])
        .collect();

    let low = char_corpus("low-entropy", &low_text);
    let high = char_corpus("high-entropy", &high_text);
    let hmin = low.baseline_entropy_bits.min(high.baseline_entropy_bits);

    let space = SearchSpace::new(
        GeneBounds {
            n_layer: (2, 2),
            n_head_choices: vec![1, 2],
            n_embd_log2: (4, 4), // 16
            batch_log2: (1, 1),  // 2
            block_log2: (3, 3),  // 8
            ..GeneBounds::default()
        },
        &ArchCostModel {
            vocab_upper_bound: 256,
            bytes_per_param: 8,
        },
        u64::MAX,
    )
    .unwrap();

    let mut wins = 0;
    for seed in 0..10u64 {
        let evo = EvolutionConfig {
            n_generations: 3,
            population_size: 4,
            elite_percent: 0.5,
            crossover_probability: 0.5,
            mutation_probability: 0.5,
            max_iters: 300,
            seed: 2000 + seed,
            elitism: false,
        };
        let mut train_cfg = TrainConfig::new(300, 0);
        train_cfg.eval_iters = 100;
        train_cfg.n_boot = 4;

        let mut final_calibrated = [0.0f64; 2];
        for (slot, data) in [&low, &high].into_iter().enumerate() {
            let fitness = TrainFitness {
                data,
                train_cfg: train_cfg.clone(),
            };
            let sim = run_evolution(
                &evo,
                &space,
                &data.corpus_name,
                "character",
                &fitness,
                &mut NullSink,
            )
            .unwrap();
            let summary = generation_summary(&sim, data.baseline_entropy_bits, hmin).unwrap();
            final_calibrated[slot] = summary.last().unwrap().mean_calibrated_loss;
        }
        if final_calibrated[0] < final_calibrated[1] {
            wins += 1;
        }
    }
    assert!(
        wins >= 9,
        "low-entropy corpus won only {wins}/10 seeded runs"
    );

    pass(10, started, &format!("low-entropy corpus attained lower mean calibrated loss in {wins}/10 runs"));
}

// Criterion 11 (optional, non-gating): with a corpus snapshot matching the
// published download date, the character-tokenization entropy reproduces the
// published value within +/-0.05 bits. Gated on EVOLM_COQ_SNAPSHOT because
// the entropy is snapshot-dependent.
#[test]
fn acceptance_11_snapshot_entropy_optional() {
    let started = Instant::now();
    let Some(root) = std::env::var_os("EVOLM_COQ_SNAPSHOT") else {
        println!(
            "ACCEPTANCE 11 SKIP: non-gating; set EVOLM_COQ_SNAPSHOT to a Coq checkout \
             from the published snapshot date to check entropy 3.456047 +/- 0.05"
        );
        return;
    };
    let corpus = evolm::corpus::ingest_corpus(
        std::path::Path::new(&root),
        &LanguageProfile::coq(),
        false,
    )
    .unwrap();
    let text = corpus.concatenated();
    let tok = train_character_tokenizer(&text).unwrap();
    let ids = tok.encode(&text).unwrap();
    let entropy = token_entropy(&ids).unwrap();
    assert!(
        (entropy - 3.456047).abs() <= 0.05,
        "snapshot entropy {entropy} outside 3.456047 +/- 0.05"
    );
    pass(11, started, &format!("Coq snapshot character entropy {entropy:.6} within +/-0.05"));
}
