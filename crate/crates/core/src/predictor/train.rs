use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{
    l1_grad, l1_loss, listmle_loss_and_grad, margin_ranking_grad, margin_ranking_loss,
    pointwise_target,
};
use super::pairs::{build_pairs, Label};
use super::{LinearScorer, Objective, TrainConfig, TrainedModel};
use crate::error::{Error, Result};
use crate::features::SparseVec;
use crate::workload::PromptRecord;

/// Pairwise margin loss of a linear scorer on one pair. The bias cancels.
pub fn pair_loss(weights: &[f64], xa: &SparseVec, xb: &SparseVec, y: Label, margin: f64) -> f64 {
    margin_ranking_loss(xa.dot(weights), xb.dot(weights), y, margin)
}

/// Dense gradient of [`pair_loss`] w.r.t. the weights.
pub fn pair_loss_grad(
    weights: &[f64],
    xa: &SparseVec,
    xb: &SparseVec,
    y: Label,
    margin: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; weights.len()];
    let g = margin_ranking_grad(xa.dot(weights), xb.dot(weights), y, margin);
    if g != 0.0 {
        xa.add_scaled_to(&mut grad, g);
        xb.add_scaled_to(&mut grad, -g);
    }
    grad
}

/// Trains a linear scorer with minibatch gradient descent from all-zero
/// weights. Deterministic for a fixed `config.seed`.
pub fn train(records: &[PromptRecord], config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    let features = records
        .iter()
        .map(|r| config.features.extract(r))
        .collect::<Result<Vec<_>>>()?;
    train_on_features(records, &features, config)
}

/// Same as [`train`] with features already extracted (one per record).
pub fn train_on_features(
    records: &[PromptRecord],
    features: &[SparseVec],
    config: &TrainConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    assert_eq!(
        records.len(),
        features.len(),
        "one feature vector per record"
    );
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut scorer = LinearScorer::zeros(config.features.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut loss_trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mean_loss = match config.objective {
            Objective::Pairwise => {
                pairwise_epoch(&mut scorer, records, features, config, &mut rng)?
            }
            Objective::PointwiseL1 => {
                pointwise_epoch(&mut scorer, records, features, config, &mut rng)
            }
            Objective::ListwiseListmle => {
                listwise_epoch(&mut scorer, records, features, config, &mut rng)
            }
        };
        if !mean_loss.is_finite() || scorer.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        loss_trace.push(mean_loss);
    }

    Ok(TrainedModel {
        scorer,
        objective: config.objective,
        config: config.clone(),
        loss_trace,
    })
}

fn pairwise_epoch(
    scorer: &mut LinearScorer,
    records: &[PromptRecord],
    features: &[SparseVec],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let n_pairs = config.examples_for(records.len());
    let pairs = build_pairs(records, config.delta, n_pairs, rng.random())?;
    let mut total = 0.0;
    let mut steps = Vec::with_capacity(config.batch_size);
    for batch in pairs.chunks(config.batch_size) {
        // Gradients are taken at the pre-batch weights.
        steps.clear();
        for p in batch {
            let (xa, xb) = (&features[p.a], &features[p.b]);
            let (sa, sb) = (scorer.score_features(xa), scorer.score_features(xb));
            total += margin_ranking_loss(sa, sb, p.y, config.margin);
            steps.push((p.a, p.b, margin_ranking_grad(sa, sb, p.y, config.margin)));
        }
        let scale = config.learning_rate / batch.len() as f64;
        for &(a, b, g) in &steps {
            if g != 0.0 {
                features[a].add_scaled_to(&mut scorer.weights, -scale * g);
                features[b].add_scaled_to(&mut scorer.weights, scale * g);
            }
        }
    }
    Ok(total / pairs.len() as f64)
}

fn pointwise_epoch(
    scorer: &mut LinearScorer,
    records: &[PromptRecord],
    features: &[SparseVec],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let order = epoch_order(records.len(), config.examples_for(records.len()), rng);
    let mut total = 0.0;
    let mut steps = Vec::with_capacity(config.batch_size);
    for batch in order.chunks(config.batch_size) {
        steps.clear();
        for &i in batch {
            let pred = scorer.score_features(&features[i]);
            let target = pointwise_target(records[i].output_len);
            total += l1_loss(pred, target);
            steps.push((i, l1_grad(pred, target)));
        }
        let scale = config.learning_rate / batch.len() as f64;
        for &(i, g) in &steps {
            if g != 0.0 {
                features[i].add_scaled_to(&mut scorer.weights, -scale * g);
                scorer.bias -= scale * g;
            }
        }
    }
    total / order.len() as f64
}

/// `count` record indices made of back-to-back shuffled passes over the data.
fn epoch_order(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order = Vec::with_capacity(count + n);
    while order.len() < count {
        let start = order.len();
        order.extend(0..n);
        order[start..].shuffle(rng);
    }
    order.truncate(count);
    order
}

fn listwise_epoch(
    scorer: &mut LinearScorer,
    records: &[PromptRecord],
    features: &[SparseVec],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> f64 {
    // Lists never straddle two passes, so items within a list are distinct.
    let n = records.len();
    let target = config.examples_for(n);
    let mut lists: Vec<Vec<usize>> = Vec::new();
    let mut items = 0;
    while items < target && n >= 2 {
        let mut pass: Vec<usize> = (0..n).collect();
        pass.shuffle(rng);
        for chunk in pass.chunks(config.list_size) {
            if chunk.len() >= 2 && items < target {
                items += chunk.len();
                lists.push(chunk.to_vec());
            }
        }
    }
    if lists.is_empty() {
        return 0.0;
    }
    // True order: longest first, ties by id.
    for list in &mut lists {
        list.sort_by(|&a, &b| {
            records[b]
                .output_len
                .cmp(&records[a].output_len)
                .then_with(|| records[a].id.cmp(&records[b].id))
        });
    }
    let lists_per_batch = (config.batch_size / config.list_size).max(1);
    let mut total = 0.0;
    let mut steps: Vec<(usize, f64)> = Vec::new();
    for batch in lists.chunks(lists_per_batch) {
        steps.clear();
        for list in batch {
            let scores: Vec<f64> = list
                .iter()
                .map(|&i| scorer.score_features(&features[i]))
                .collect();
            let (loss, grad) = listmle_loss_and_grad(&scores);
            total += loss;
            steps.extend(list.iter().copied().zip(grad));
        }
        // The bias shifts every score equally and ListMLE is shift-invariant.
        let scale = config.learning_rate / batch.len() as f64;
        for &(i, g) in &steps {
            features[i].add_scaled_to(&mut scorer.weights, -scale * g);
        }
    }
    total / lists.len() as f64
}
