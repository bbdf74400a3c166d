//! Verify every hand-written backward pass against central finite
//! differences and print the per-parameter report.
//!
//! ```bash
//! cargo run --example gradient_check
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use omlog::neural::{
    gradient_check, mse_loss, softmax_cross_entropy, Dense, Embedding, LstmCell, ParameterStore,
};

fn print_report(label: &str, report: &omlog::neural::GradCheckReport) {
    println!(
        "{label}: max rel err {:.3e} ({})",
        report.max_rel_err(),
        if report.passed() { "pass" } else { "FAIL" }
    );
    for entry in &report.entries {
        println!(
            "    {:<14} max_rel_err {:.3e} checked {:>4} skipped {:>4}",
            entry.param, entry.max_rel_err, entry.checked, entry.skipped
        );
    }
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);

    // Dense layer under an MSE objective.
    let mut store = ParameterStore::new();
    let dense = Dense::init(&mut store, "dense", 4, 3, &mut rng);
    let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let target: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    store.zero_grads();
    let y = dense.forward(&store, &x);
    let (_, dy) = mse_loss(&y, &target);
    dense.backward(&mut store, &x, &dy);
    let report = gradient_check(
        &mut store,
        |s| mse_loss(&dense.forward(s, &x), &target).0,
        1e-4,
        1e-5,
    );
    print_report("dense", &report);

    // LSTM cell, gradient through the hidden state.
    let mut store = ParameterStore::new();
    let cell = LstmCell::init(&mut store, "lstm", 3, 6, &mut rng);
    let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h0 = vec![0.05; 6];
    let c0 = vec![-0.1; 6];
    let target: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    store.zero_grads();
    let step = cell.forward(&store, &x, &h0, &c0);
    let (_, dh) = mse_loss(&step.h, &target);
    cell.backward(&mut store, &step, &dh, &[0.0; 6]);
    let report = gradient_check(
        &mut store,
        |s| mse_loss(&cell.forward(s, &x, &h0, &c0).h, &target).0,
        1e-4,
        1e-5,
    );
    print_report("lstm cell", &report);

    // Embedding + classifier under cross-entropy; untouched rows are skipped.
    let mut store = ParameterStore::new();
    let emb = Embedding::init(&mut store, "embedding", 6, 4, &mut rng);
    let cls = Dense::init(&mut store, "classifier", 4, 6, &mut rng);
    let lookup = 2usize;
    store.zero_grads();
    let e = emb.forward(&store, lookup);
    let logits = cls.forward(&store, &e);
    let (_, dlogits) = softmax_cross_entropy(&logits, 4);
    let de = cls.backward(&mut store, &e, &dlogits);
    emb.backward(&mut store, lookup, &de);
    let report = gradient_check(
        &mut store,
        |s| {
            let e = emb.forward(s, lookup);
            softmax_cross_entropy(&cls.forward(s, &e), 4).0
        },
        1e-4,
        1e-5,
    );
    print_report("embedding + classifier", &report);
}
