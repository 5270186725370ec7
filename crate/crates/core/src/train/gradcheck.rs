use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{batch_gradients, loss, predict};
use crate::data::{Example, Label, Task, Visit};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::{finite_diff_check, GradCheckReport};

/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Size of the tiny end-to-end network under test.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckSetup {
    pub task: Task,
    pub d: usize,
    pub visits: usize,
    pub codes: usize,
    pub classes: usize,
    pub examples: usize,
    pub seed: u64,
    pub depth: usize,
    pub use_attention_pooling: bool,
    pub use_positional_mask: bool,
    pub use_interval_encoding: bool,
}

impl GradCheckSetup {
    pub fn tiny(task: Task) -> Self {
        GradCheckSetup {
            task,
            d: 4,
            visits: 3,
            codes: 2,
            classes: 2,
            examples: 2,
            seed: 0,
            depth: 1,
            use_attention_pooling: true,
            use_positional_mask: true,
            use_interval_encoding: true,
        }
    }
}

/// Compares backpropagated gradients of the full model against central
/// differences of the eval-mode loss, over every parameter.
pub fn model_gradcheck(setup: &GradCheckSetup) -> Result<GradCheckReport> {
    if setup.visits == 0 || setup.codes == 0 || setup.examples == 0 {
        return Err(Error::Config("gradient check needs visits, codes and examples".into()));
    }
    let vocab = 2 * setup.codes + 3;
    let config = ModelConfig {
        d: setup.d,
        max_visits: setup.visits,
        max_codes: setup.codes,
        vocab_size: vocab,
        num_classes: setup.classes,
        dropout: 0.0,
        max_interval: 12,
        task: setup.task,
        use_attention_pooling: setup.use_attention_pooling,
        use_positional_mask: setup.use_positional_mask,
        use_interval_encoding: setup.use_interval_encoding,
        depth: setup.depth,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let mut params = ModelParams::init(&config, setup.seed)?;
    // larger weights so every nonlinearity leaves its linear regime
    let normal = Normal::new(0.0, 0.4).expect("finite std");
    for t in params.tensors_mut() {
        t.data_mut().iter_mut().for_each(|x| *x += normal.sample(&mut rng));
    }
    params.zero_padding_row();

    let examples: Vec<Example> = (0..setup.examples)
        .map(|e| {
            let mut day = 0;
            let visits = (0..setup.visits)
                .map(|_| {
                    day += rng.random_range(0..6);
                    let n = rng.random_range(1..=setup.codes);
                    let codes = (0..n).map(|_| rng.random_range(1..vocab as u32)).collect();
                    Visit::new(codes, day, None)
                })
                .collect::<Result<Vec<_>>>()?;
            let label = match setup.task {
                Task::Readmission => Label::Readmission(e % 2 == 0),
                Task::Diagnosis => Label::Diagnosis(vec![e % setup.classes]),
            };
            Ok(Example {
                patient_id: format!("g{e}"),
                visits,
                label,
            })
        })
        .collect::<Result<_>>()?;
    let labels: Vec<Label> = examples.iter().map(|e| e.label.clone()).collect();

    let (_, grads) = batch_gradients(&params, &config, &examples, 0, 0)?;
    let mut probe = params.clone();
    finite_diff_check(
        |flat| {
            probe.set_flat(flat)?;
            loss(&predict(&probe, &config, &examples)?, &labels, config.task)
        },
        &params.to_flat(),
        &grads.to_flat(),
        GRADCHECK_STEP,
    )
}
