//! Dataset splitting (leave-one-domain-out and standard) and synthetic
//! augmentation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{AnnotatedQuestion, Provenance};
use crate::error::{Error, Result};

/// Train/validation/test partition. In leave-one-domain-out mode the test
/// set holds exactly the target domain's pairs and no train or validation
/// example touches that domain.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<AnnotatedQuestion>,
    pub validation: Vec<AnnotatedQuestion>,
    pub test: Vec<AnnotatedQuestion>,
    pub target_domain: Option<String>,
}

impl DatasetSplit {
    pub fn total(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }
}

/// Move all target-domain pairs to test and split the remainder 90/10
/// into train/validation by a seeded shuffle.
pub fn split_leave_one_out(
    data: Vec<AnnotatedQuestion>,
    target_domain: &str,
    seed: u64,
) -> Result<DatasetSplit> {
    if !data.iter().any(|q| q.domain == target_domain) {
        return Err(Error::Invalid(format!(
            "target domain `{target_domain}` has no examples in the dataset"
        )));
    }
    let mut test = Vec::new();
    let mut rest = Vec::new();
    for q in data {
        if q.domain == target_domain {
            test.push(q);
        } else {
            rest.push(q);
        }
    }
    let mut order: Vec<usize> = (0..rest.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_val = rest.len() / 10;
    let val_set: std::collections::HashSet<usize> = order[..n_val].iter().copied().collect();
    let mut train = Vec::with_capacity(rest.len() - n_val);
    let mut validation = Vec::with_capacity(n_val);
    for (i, q) in rest.into_iter().enumerate() {
        if val_set.contains(&i) {
            validation.push(q);
        } else {
            train.push(q);
        }
    }
    Ok(DatasetSplit {
        train,
        validation,
        test,
        target_domain: Some(target_domain.to_string()),
    })
}

/// Standard 80/10/10 split by seeded shuffle, no held-out domain.
pub fn split_standard(data: Vec<AnnotatedQuestion>, seed: u64) -> Result<DatasetSplit> {
    if data.is_empty() {
        return Err(Error::EmptyInput("dataset".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n = data.len();
    let n_test = n / 10;
    let n_val = n / 10;
    let test_set: std::collections::HashSet<usize> = order[..n_test].iter().copied().collect();
    let val_set: std::collections::HashSet<usize> =
        order[n_test..n_test + n_val].iter().copied().collect();
    let mut split = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        target_domain: None,
    };
    for (i, q) in data.into_iter().enumerate() {
        if test_set.contains(&i) {
            split.test.push(q);
        } else if val_set.contains(&i) {
            split.validation.push(q);
        } else {
            split.train.push(q);
        }
    }
    Ok(split)
}

/// Add synthetic target-domain pairs to the training set; the test set is
/// untouched. Synthetic pairs must be target-domain only and carry
/// synthetic provenance.
pub fn augment(split: DatasetSplit, synthetic: Vec<AnnotatedQuestion>) -> Result<DatasetSplit> {
    let Some(target) = split.target_domain.clone() else {
        return Err(Error::Invalid(
            "augmentation requires a leave-one-domain-out split".into(),
        ));
    };
    let mut out = split;
    for q in synthetic {
        if q.domain != target {
            return Err(Error::Contamination(format!(
                "synthetic pair from source domain `{}`",
                q.domain
            )));
        }
        if q.record.provenance != Provenance::Synthetic {
            return Err(Error::Invalid(
                "augmentation rows must carry synthetic provenance".into(),
            ));
        }
        out.train.push(q);
    }
    Ok(out)
}
