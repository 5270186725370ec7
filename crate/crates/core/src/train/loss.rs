use crate::data::{Label, Task};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Loss of one example given its `[C]` logits.
///
/// Readmission uses two-class softmax cross-entropy; diagnosis uses the
/// per-class sigmoid binary cross-entropy averaged over classes.
pub fn example_loss(tape: &mut Tape<'_>, logits: Var, label: &Label, task: Task) -> Result<Var> {
    let c = tape.value(logits).numel();
    match (task, label) {
        (Task::Readmission, Label::Readmission(positive)) => {
            if c != 2 {
                return Err(Error::shape("readmission loss", &[c], &[2]));
            }
            let logp = tape.log_softmax(logits)?;
            let pick = Tensor::from_vec(if *positive { vec![0.0, -1.0] } else { vec![-1.0, 0.0] });
            let pick = tape.constant(pick);
            let nll = tape.mul(logp, pick)?;
            Ok(tape.sum(nll))
        }
        (Task::Diagnosis, Label::Diagnosis(classes)) => {
            let mut target = vec![0.0; c];
            for &k in classes {
                *target.get_mut(k).ok_or_else(|| {
                    Error::Contract(format!("diagnosis target class {k} outside {c} logits"))
                })? = 1.0;
            }
            let target = tape.constant(Tensor::from_vec(target));
            let sp = tape.softplus(logits);
            let yz = tape.mul(logits, target)?;
            let per_class = tape.sub(sp, yz)?;
            Ok(tape.mean(per_class))
        }
        _ => Err(Error::Contract(format!("label {label:?} does not match task {task}"))),
    }
}

/// Mean loss over a batch of `[B×C]` logits.
pub fn loss(logits: &Tensor, labels: &[Label], task: Task) -> Result<f64> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() || labels.is_empty() {
        return Err(Error::shape("loss", logits.shape(), &[labels.len()]));
    }
    let mut total = 0.0;
    for (b, label) in labels.iter().enumerate() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::from_vec(logits.row(b).to_vec()));
        let l = example_loss(&mut tape, z, label, task)?;
        total += tape.value(l).item()?;
    }
    Ok(total / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confident_correct_readmission() {
        let z = Tensor::from_rows(&[vec![0.0, 20.0]]);
        let l = loss(&z, &[Label::Readmission(true)], Task::Readmission).unwrap();
        assert!(l < 1e-3 && l >= 0.0);
    }

    #[test]
    fn uniform_two_class_is_ln2() {
        let z = Tensor::from_rows(&[vec![0.3, 0.3]]);
        let l = loss(&z, &[Label::Readmission(false)], Task::Readmission).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_logits_diagnosis_is_ln2() {
        let z = Tensor::zeros([2, 6]);
        let labels = [Label::Diagnosis(vec![1, 4]), Label::Diagnosis(vec![0])];
        let l = loss(&z, &labels, Task::Diagnosis).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn mismatched_label_is_error() {
        let z = Tensor::zeros([1, 2]);
        assert!(loss(&z, &[Label::Diagnosis(vec![0])], Task::Readmission).is_err());
        assert!(loss(&z, &[Label::Diagnosis(vec![5])], Task::Diagnosis).is_err());
    }
}
