use crate::dataset::{collate, Sample};
use crate::error::{Error, Result};
use crate::nn::{argmax, softmax, Model};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Granularity {
    Clip,
    Piece,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub granularity: Granularity,
    pub composers: Vec<String>,
    /// `None` for composers with no evaluated items.
    pub per_composer_accuracy: Vec<(String, Option<f64>)>,
    /// Unweighted mean over composers that have items.
    pub macro_accuracy: f64,
    /// Set on piece-level reports (equal to `macro_accuracy` there).
    pub piece_macro_accuracy: Option<f64>,
    /// Fraction of all items classified correctly.
    pub micro_accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub clip_count: usize,
    pub piece_count: usize,
}

impl EvalReport {
    pub fn item_count(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

/// Class probabilities for every sample, computed in eval mode.
pub fn predict_proba(model: &mut Model<f32>, samples: &[Sample], batch_size: usize) -> Result<Vec<Vec<f64>>> {
    let classes = model.config().num_classes;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (x, _) = collate(&refs)?;
        let probs = softmax(&model.predict_logits(x)?)?;
        out.extend(probs.data().chunks(classes).map(|r| r.iter().map(|&v| v as f64).collect()));
    }
    Ok(out)
}

fn build_report(
    granularity: Granularity,
    predictions: &[(usize, usize)],
    composers: &[String],
    clip_count: usize,
    piece_count: usize,
) -> Result<EvalReport> {
    let c = composers.len();
    let mut confusion = vec![vec![0usize; c]; c];
    for &(truth, pred) in predictions {
        if truth >= c {
            return Err(Error::InvalidLabel { label: truth, classes: c });
        }
        if pred >= c {
            return Err(Error::InvalidLabel { label: pred, classes: c });
        }
        confusion[truth][pred] += 1;
    }
    let per_composer_accuracy: Vec<(String, Option<f64>)> = composers
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let total: usize = confusion[i].iter().sum();
            (name.clone(), (total > 0).then(|| confusion[i][i] as f64 / total as f64))
        })
        .collect();
    let present: Vec<f64> = per_composer_accuracy.iter().filter_map(|(_, a)| *a).collect();
    let macro_accuracy = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    let correct: usize = (0..c).map(|i| confusion[i][i]).sum();
    let micro_accuracy = if predictions.is_empty() {
        0.0
    } else {
        correct as f64 / predictions.len() as f64
    };
    Ok(EvalReport {
        granularity,
        composers: composers.to_vec(),
        per_composer_accuracy,
        macro_accuracy,
        piece_macro_accuracy: (granularity == Granularity::Piece).then_some(macro_accuracy),
        micro_accuracy,
        confusion,
        clip_count,
        piece_count,
    })
}

/// Clip-level report from per-clip probabilities and true labels.
pub fn clip_report(probs: &[Vec<f64>], labels: &[usize], source_ids: &[&str], composers: &[String]) -> Result<EvalReport> {
    if probs.len() != labels.len() || source_ids.len() != labels.len() {
        return Err(Error::Shape("probabilities, labels and ids differ in length".into()));
    }
    check_widths(probs, composers.len())?;
    let predictions: Vec<(usize, usize)> = probs.iter().zip(labels).map(|(p, &l)| (l, argmax(p))).collect();
    let pieces = distinct_in_order(source_ids).len();
    build_report(Granularity::Clip, &predictions, composers, labels.len(), pieces)
}

fn check_widths(probs: &[Vec<f64>], classes: usize) -> Result<()> {
    match probs.iter().find(|p| p.len() != classes) {
        Some(p) => Err(Error::Shape(format!("probability vector of width {} for {classes} classes", p.len()))),
        None => Ok(()),
    }
}

fn distinct_in_order<'a>(ids: &[&'a str]) -> Vec<&'a str> {
    let mut seen = std::collections::HashSet::new();
    ids.iter().copied().filter(|id| seen.insert(*id)).collect()
}

/// Per piece (in first-appearance order): its id, label and the mean of its
/// clips' probability vectors. Each class column is summed in ascending order
/// so the mean does not depend on clip order.
pub fn aggregate_pieces(probs: &[Vec<f64>], labels: &[usize], source_ids: &[&str]) -> Result<Vec<(String, usize, Vec<f64>)>> {
    if probs.len() != labels.len() || source_ids.len() != labels.len() {
        return Err(Error::Shape("probabilities, labels and ids differ in length".into()));
    }
    let mut out = Vec::new();
    for id in distinct_in_order(source_ids) {
        let members: Vec<usize> = (0..source_ids.len()).filter(|&i| source_ids[i] == id).collect();
        let label = labels[members[0]];
        if members.iter().any(|&i| labels[i] != label) {
            return Err(Error::Data(format!("clips of piece {id:?} carry different labels")));
        }
        let width = probs[members[0]].len();
        let mean = (0..width)
            .map(|c| {
                let mut column: Vec<f64> = members.iter().map(|&i| probs[i][c]).collect();
                column.sort_by(f64::total_cmp);
                column.iter().sum::<f64>() / members.len() as f64
            })
            .collect();
        out.push((id.to_string(), label, mean));
    }
    Ok(out)
}

/// Piece-level report: argmax of the mean clip probabilities per piece.
pub fn piece_report(probs: &[Vec<f64>], labels: &[usize], source_ids: &[&str], composers: &[String]) -> Result<EvalReport> {
    check_widths(probs, composers.len())?;
    let pieces = aggregate_pieces(probs, labels, source_ids)?;
    let predictions: Vec<(usize, usize)> = pieces.iter().map(|(_, l, mean)| (*l, argmax(mean))).collect();
    build_report(Granularity::Piece, &predictions, composers, labels.len(), pieces.len())
}

fn check_classes(model: &Model<f32>, composers: &[String]) -> Result<()> {
    if model.config().num_classes != composers.len() {
        return Err(Error::Shape(format!(
            "model predicts {} classes but {} composers were given",
            model.config().num_classes,
            composers.len()
        )));
    }
    Ok(())
}

pub fn evaluate_clips(model: &mut Model<f32>, samples: &[Sample], composers: &[String], batch_size: usize) -> Result<EvalReport> {
    check_classes(model, composers)?;
    if let Some(s) = samples.iter().find(|s| s.label >= composers.len()) {
        return Err(Error::InvalidLabel {
            label: s.label,
            classes: composers.len(),
        });
    }
    let probs = predict_proba(model, samples, batch_size)?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let ids: Vec<&str> = samples.iter().map(|s| s.source_id.as_str()).collect();
    clip_report(&probs, &labels, &ids, composers)
}

pub fn evaluate_pieces(model: &mut Model<f32>, samples: &[Sample], composers: &[String], batch_size: usize) -> Result<EvalReport> {
    check_classes(model, composers)?;
    if let Some(s) = samples.iter().find(|s| s.label >= composers.len()) {
        return Err(Error::InvalidLabel {
            label: s.label,
            classes: composers.len(),
        });
    }
    let probs = predict_proba(model, samples, batch_size)?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let ids: Vec<&str> = samples.iter().map(|s| s.source_id.as_str()).collect();
    piece_report(&probs, &labels, &ids, composers)
}
