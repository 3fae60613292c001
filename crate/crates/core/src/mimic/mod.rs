//! Attribute perspective: a neural teacher labels the training set with
//! probabilities, and an interpretable tree forest learns to reproduce them.

mod encode;
mod forest;
mod teacher;

pub use encode::{encode_attributes, feature_block_map, AttributeVector};
pub use forest::{
    activated_paths, attribute_importance_global, attribute_importance_instance,
    signed_attribute_contributions, train_student, ActivatedPath, AttributeImportance,
    FeatureSubsample, StudentConfig, StudentForest, DEFAULT_TREES,
};
pub use teacher::{
    rows_to_matrix, soft_labels, train_teacher, Dense, TeacherConfig, TeacherNet,
    TrainingHistory,
};

use serde::{Deserialize, Serialize};

use crate::corpus::NewsItem;
use crate::error::{Error, Result};
use crate::text::EmbeddingTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimicConfig {
    /// Dimensions kept from each attribute's mean embedding.
    pub field_dim: usize,
    pub teacher: TeacherConfig,
    pub student: StudentConfig,
}

impl Default for MimicConfig {
    fn default() -> Self {
        MimicConfig {
            field_dim: 50,
            teacher: TeacherConfig::default(),
            student: StudentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimicModel {
    pub field_dim: usize,
    pub teacher: TeacherNet,
    pub forest: StudentForest,
}

#[derive(Debug, Clone)]
pub struct MimicTraining {
    pub model: MimicModel,
    pub teacher_history: TrainingHistory,
    /// Mean |student − teacher| on the training rows.
    pub fidelity_mae: f64,
    /// Mean |median(teacher) − teacher|: the error of the best constant
    /// predictor under the same metric.
    pub constant_mae: f64,
}

impl MimicModel {
    /// Trains the teacher on hard labels, then the student on the teacher's
    /// soft labels. Items without a label are skipped.
    pub fn train(items: &[NewsItem], table: &EmbeddingTable, config: &MimicConfig) -> Result<MimicTraining> {
        if config.field_dim == 0 || config.field_dim > table.dim() {
            return Err(Error::InvalidConfig(format!(
                "field dimension {} must be in 1..={}",
                config.field_dim,
                table.dim()
            )));
        }
        let labeled: Vec<&NewsItem> = items.iter().filter(|i| i.label.is_some()).collect();
        let rows: Vec<Vec<f64>> = labeled
            .iter()
            .map(|item| encode_attributes(item, table, config.field_dim).features())
            .collect();
        let targets: Vec<f64> = labeled
            .iter()
            .map(|item| item.label.unwrap().fake_target())
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptyInput("mimic training"));
        }
        let x = rows_to_matrix(&rows);
        let (teacher, teacher_history) = train_teacher(x.view(), &targets, &config.teacher)?;
        let soft = soft_labels(&teacher, &rows);
        let forest = train_student(&rows, &soft, feature_block_map(config.field_dim), &config.student)?;

        let n = rows.len() as f64;
        let fidelity_mae = rows
            .iter()
            .zip(&soft)
            .map(|(r, s)| (forest.predict(r) - s).abs())
            .sum::<f64>()
            / n;
        let mut sorted = soft.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let constant_mae = soft.iter().map(|s| (s - median).abs()).sum::<f64>() / n;
        Ok(MimicTraining {
            model: MimicModel {
                field_dim: config.field_dim,
                teacher,
                forest,
            },
            teacher_history,
            fidelity_mae,
            constant_mae,
        })
    }

    pub fn encode(&self, item: &NewsItem, table: &EmbeddingTable) -> AttributeVector {
        encode_attributes(item, table, self.field_dim)
    }

    /// Forest mean over the encoded item.
    pub fn predict(&self, item: &NewsItem, table: &EmbeddingTable) -> f64 {
        self.forest.predict(&self.encode(item, table).features())
    }

    pub fn teacher_probability(&self, item: &NewsItem, table: &EmbeddingTable) -> f64 {
        self.teacher.predict(&self.encode(item, table).features())
    }
}
