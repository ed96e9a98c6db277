//! Operator type signatures and a dynamically composed pipeline.
//!
//! Statically, each operator trait fixes its element types. Pipelines built
//! at runtime from configuration go through [`typecheck_pipeline`] first, so
//! an accepted composition never hits an element-type mismatch while running.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dictionary::AttributeDictionary;
use crate::error::{Error, Result};
use crate::explain::ExplanationRecord;
use crate::point::{LabeledPoint, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorKind {
    Ingestor,
    Transformer,
    Classifier,
    Explainer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StreamType {
    Points,
    LabeledPoints,
    Explanations,
}

impl fmt::Display for StreamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StreamType::Points => "Point",
            StreamType::LabeledPoints => "(Label, Point)",
            StreamType::Explanations => "Explanation",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorSignature {
    pub kind: OperatorKind,
    /// `None` for sources.
    pub input: Option<StreamType>,
    pub output: StreamType,
}

impl OperatorSignature {
    pub const fn of(kind: OperatorKind) -> Self {
        use StreamType::*;
        match kind {
            OperatorKind::Ingestor => Self {
                kind,
                input: None,
                output: Points,
            },
            OperatorKind::Transformer => Self {
                kind,
                input: Some(Points),
                output: Points,
            },
            OperatorKind::Classifier => Self {
                kind,
                input: Some(Points),
                output: LabeledPoints,
            },
            OperatorKind::Explainer => Self {
                kind,
                input: Some(LabeledPoints),
                output: Explanations,
            },
        }
    }
}

pub fn typecheck_pipeline(stages: &[OperatorSignature]) -> Result<()> {
    let Some(first) = stages.first() else {
        return Err(Error::Composition {
            index: 0,
            detail: "pipeline has no stages".into(),
        });
    };
    if first.kind != OperatorKind::Ingestor || first.input.is_some() {
        return Err(Error::Composition {
            index: 0,
            detail: format!("pipeline must start with an Ingestor, found {:?}", first.kind),
        });
    }
    for (i, pair) in stages.windows(2).enumerate() {
        let (prev, next) = (&pair[0], &pair[1]);
        match next.input {
            Some(t) if t == prev.output => {}
            Some(t) => {
                return Err(Error::Composition {
                    index: i + 1,
                    detail: format!(
                        "{:?} expects a {} stream but {:?} produces {}",
                        next.kind, t, prev.kind, prev.output
                    ),
                })
            }
            None => {
                return Err(Error::Composition {
                    index: i + 1,
                    detail: format!("{:?} cannot consume a stream", next.kind),
                })
            }
        }
    }
    let last = stages.last().expect("nonempty");
    if last.output != StreamType::Explanations {
        return Err(Error::Composition {
            index: stages.len() - 1,
            detail: format!("pipeline must end in an Explanation stream, ends in {}", last.output),
        });
    }
    Ok(())
}

/// Produces point batches; `Ok(None)` signals end of stream.
pub trait Ingestor: Send {
    fn next_batch(&mut self, dict: &mut AttributeDictionary) -> Result<Option<Vec<Point>>>;
}

pub trait Transformer: Send {
    fn transform(&mut self, batch: Vec<Point>) -> Result<Vec<Point>>;
}

pub trait Classifier: Send {
    fn classify(&mut self, batch: Vec<Point>) -> Result<Vec<LabeledPoint>>;
}

pub trait Explainer: Send {
    fn consume(&mut self, batch: &[LabeledPoint]) -> Result<()>;
    fn explain(&mut self) -> Result<Vec<ExplanationRecord>>;
}

pub enum Operator {
    Ingestor(Box<dyn Ingestor>),
    Transformer(Box<dyn Transformer>),
    Classifier(Box<dyn Classifier>),
    Explainer(Box<dyn Explainer>),
}

impl Operator {
    pub fn signature(&self) -> OperatorSignature {
        OperatorSignature::of(match self {
            Operator::Ingestor(_) => OperatorKind::Ingestor,
            Operator::Transformer(_) => OperatorKind::Transformer,
            Operator::Classifier(_) => OperatorKind::Classifier,
            Operator::Explainer(_) => OperatorKind::Explainer,
        })
    }
}

enum Batch {
    Points(Vec<Point>),
    Labeled(Vec<LabeledPoint>),
}

/// A pipeline assembled at runtime from boxed operators.
pub struct DynPipeline {
    stages: Vec<Operator>,
}

impl DynPipeline {
    pub fn new(stages: Vec<Operator>) -> Result<Self> {
        let sigs: Vec<_> = stages.iter().map(Operator::signature).collect();
        typecheck_pipeline(&sigs)?;
        Ok(Self { stages })
    }

    /// Drains the source through every stage and returns the final explanations.
    pub fn run(&mut self, dict: &mut AttributeDictionary) -> Result<Vec<ExplanationRecord>> {
        let (source, rest) = self.stages.split_first_mut().expect("typechecked");
        let Operator::Ingestor(source) = source else {
            unreachable!("typechecked pipelines start with an ingestor")
        };
        while let Some(points) = source.next_batch(dict)? {
            let mut batch = Batch::Points(points);
            for (i, stage) in rest.iter_mut().enumerate() {
                batch = match (stage, batch) {
                    (Operator::Transformer(t), Batch::Points(p)) => Batch::Points(t.transform(p)?),
                    (Operator::Classifier(c), Batch::Points(p)) => Batch::Labeled(c.classify(p)?),
                    (Operator::Explainer(e), Batch::Labeled(l)) => {
                        e.consume(&l)?;
                        Batch::Labeled(Vec::new())
                    }
                    _ => {
                        return Err(Error::Composition {
                            index: i + 1,
                            detail: "element type mismatch at runtime".into(),
                        })
                    }
                };
            }
        }
        match self.stages.last_mut() {
            Some(Operator::Explainer(e)) => e.explain(),
            _ => unreachable!("typechecked pipelines end with an explainer"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use OperatorKind::*;

    fn sigs(kinds: &[OperatorKind]) -> Vec<OperatorSignature> {
        kinds.iter().map(|&k| OperatorSignature::of(k)).collect()
    }

    #[test]
    fn default_pipeline_typechecks() {
        typecheck_pipeline(&sigs(&[Ingestor, Transformer, Classifier, Explainer])).unwrap();
        typecheck_pipeline(&sigs(&[Ingestor, Classifier, Explainer])).unwrap();
        typecheck_pipeline(&sigs(&[Ingestor, Transformer, Transformer, Classifier, Explainer]))
            .unwrap();
    }

    #[test]
    fn explainer_needs_labels() {
        let err = typecheck_pipeline(&sigs(&[Ingestor, Explainer])).unwrap_err();
        assert!(matches!(err, Error::Composition { index: 1, .. }), "{err}");
    }

    #[test]
    fn must_start_with_ingestor() {
        let err = typecheck_pipeline(&sigs(&[Classifier, Explainer])).unwrap_err();
        assert!(matches!(err, Error::Composition { index: 0, .. }));
    }

    #[test]
    fn must_end_in_explanations() {
        assert!(typecheck_pipeline(&sigs(&[Ingestor, Transformer])).is_err());
        assert!(typecheck_pipeline(&sigs(&[Ingestor, Classifier])).is_err());
        assert!(typecheck_pipeline(&[]).is_err());
    }

    #[test]
    fn transformer_after_classifier_rejected() {
        let err =
            typecheck_pipeline(&sigs(&[Ingestor, Classifier, Transformer, Explainer])).unwrap_err();
        assert!(matches!(err, Error::Composition { index: 2, .. }));
    }
}
