//! IRT-based accuracy estimators in a synthetic 2PL world where the
//! ground truth is known. A bank is calibrated from a small population of
//! models, then merged candidates are scored on 50 anchor items only —
//! and the estimators reconstruct full-bank accuracy from those 50 bits.
//!
//! Run with: `cargo run --example irt_estimators`

use std::collections::BTreeMap;
use std::error::Error;

use evomerge::eval::EvalRecord;
use evomerge::irt::{
    calibrate_item_bank, estimate_gmpirt, estimate_gpirt, estimate_mpirt, estimate_pirt,
    estimate_random, irt_prob, sample_responses, IrtItem, ResponseMatrix,
};
use evomerge::rng::StreamKey;
use rand::Rng;

const N_ITEMS: usize = 400;
const N_ANCHORS: usize = 50;

fn main() -> Result<(), Box<dyn Error>> {
    // The true world: 400 items with random discriminations and
    // difficulties. Calibration never sees these parameters, only
    // correctness bits.
    let mut rng = StreamKey::new(9).with_str("world").rng();
    let item_ids: Vec<String> = (0..N_ITEMS).map(|i| format!("item{i:04}")).collect();
    let true_items: BTreeMap<String, IrtItem> = item_ids
        .iter()
        .map(|id| {
            let a = 0.7 + 1.8 * rng.gen::<f64>();
            let b = -2.5 + 5.0 * rng.gen::<f64>();
            (id.clone(), IrtItem { a, b })
        })
        .collect();

    let bits_at = |theta: f64, tag: &str| {
        sample_responses(theta, &item_ids, &true_items, StreamKey::new(9).with_str(tag))
    };

    // Calibration population: two endpoint models plus 22 others of
    // spread ability, each contributing one row of correctness bits.
    let (theta_a, theta_b) = (1.3, -0.7);
    let mut rows = vec![bits_at(theta_a, "endpoint-a"), bits_at(theta_b, "endpoint-b")];
    for m in 0..22 {
        let theta = -2.0 + 4.0 * (m as f64 / 21.0);
        rows.push(bits_at(theta, &format!("pop-{m}")));
    }
    let matrix = ResponseMatrix::new(item_ids.clone(), rows)?;
    let report = calibrate_item_bank(&matrix, N_ANCHORS)?;
    println!(
        "calibrated {} items in {} rounds (log-likelihood {:.1})",
        report.bank.len(),
        report.rounds,
        report.log_likelihood
    );
    println!(
        "anchors: {} items with the highest Fisher information at θ = 0",
        report.bank.anchor_ids().len()
    );
    let endpoint_thetas = [report.thetas[0], report.thetas[1]];
    println!(
        "endpoint abilities (true {theta_a} / {theta_b}): calibrated {:.2} / {:.2}\n",
        endpoint_thetas[0], endpoint_thetas[1]
    );

    // Merged candidates: ability is the weight-normalized blend of the
    // endpoint abilities — exactly the assumption MP-IRT makes.
    let index_of: BTreeMap<&str, usize> =
        item_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    println!(
        "{:>6} {:>6} | {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "w_a", "true", "anchors", "random", "pirt", "gpirt", "mpirt", "gmpirt"
    );
    let mut errors: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for step in 0..=6 {
        let w_a = step as f64 / 6.0;
        let weights = [w_a, 1.0 - w_a];
        let theta_true = w_a * theta_a + (1.0 - w_a) * theta_b;
        let full_bits = bits_at(theta_true, &format!("merged-{step}"));
        let true_acc = full_bits.iter().filter(|&&y| y).count() as f64 / N_ITEMS as f64;

        // The candidate is only ever evaluated on the anchor items.
        let anchor_ids = report.bank.anchor_ids().to_vec();
        let anchor_bits: Vec<bool> =
            anchor_ids.iter().map(|id| full_bits[index_of[id.as_str()]]).collect();
        let obs = EvalRecord::new(anchor_ids, anchor_bits, vec![]);

        let random = estimate_random(&full_bits, N_ANCHORS, 1000 + step as u64)?;
        let pirt = estimate_pirt(&obs, &report.bank)?;
        let gpirt = estimate_gpirt(&obs, &report.bank, 0.5)?;
        let mpirt = estimate_mpirt(&endpoint_thetas, &weights, &obs, &report.bank)?;
        let gmpirt = estimate_gmpirt(mpirt, obs.accuracy, 0.5)?;

        println!(
            "{:>6.2} {:>6.3} | {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3}",
            w_a, true_acc, obs.accuracy, random, pirt, gpirt, mpirt, gmpirt
        );
        for (name, estimate) in [
            ("anchors", obs.accuracy),
            ("random", random),
            ("pirt", pirt),
            ("gpirt", gpirt),
            ("mpirt", mpirt),
            ("gmpirt", gmpirt),
        ] {
            errors.entry(name).or_default().push((estimate - true_acc).abs());
        }
    }

    println!("\nmean absolute error over the 7 candidates:");
    let mut ranked: Vec<(&str, f64)> = errors
        .iter()
        .map(|(name, errs)| (*name, errs.iter().sum::<f64>() / errs.len() as f64))
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    for (name, mae) in &ranked {
        println!("  {name:<8} {mae:.4}");
    }

    // Why extrapolation works: the calibrated curve of one anchor item.
    let sample_id = &report.bank.anchor_ids()[0];
    let item = report.bank.get(sample_id).unwrap();
    println!(
        "\nanchor {sample_id}: a = {:.2}, b = {:+.2}; P(correct) at θ = −2/0/+2: {:.2}/{:.2}/{:.2}",
        item.a,
        item.b,
        irt_prob(-2.0, item),
        irt_prob(0.0, item),
        irt_prob(2.0, item),
    );
    Ok(())
}
