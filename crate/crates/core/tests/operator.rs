use fastdata::classify::{DensityModel, MadModel, ModelClassifier};
use fastdata::engine::TransformChain;
use fastdata::explain::{BatchExplainer, ExplainParams};
use fastdata::ingest::{DeviceSource, SynthDeviceParams};
use fastdata::operator::{typecheck_pipeline, DynPipeline, Operator, OperatorKind, OperatorSignature};
use fastdata::query::TransformSpec;
use fastdata::streamexplain::{StreamingExplainer, StreamingSummarizer};
use fastdata::{AttributeDictionary, Error};
use proptest::prelude::*;

const KINDS: [OperatorKind; 4] = [
    OperatorKind::Ingestor,
    OperatorKind::Transformer,
    OperatorKind::Classifier,
    OperatorKind::Explainer,
];

fn build(kind: OperatorKind, variant: bool, n_points: u64, cutoff: f64) -> Operator {
    match kind {
        OperatorKind::Ingestor => Operator::Ingestor(Box::new(
            DeviceSource::new(
                SynthDeviceParams {
                    n_points,
                    n_devices: 20,
                    outlier_device_fraction: 0.1,
                    seed: Some(n_points),
                    ..Default::default()
                },
                if variant { 7 } else { 100 },
            )
            .unwrap(),
        )),
        OperatorKind::Transformer => Operator::Transformer(Box::new(TransformChain::new(&[if variant {
            TransformSpec::Standardize
        } else {
            TransformSpec::Identity
        }]))),
        OperatorKind::Classifier => Operator::Classifier(Box::new(ModelClassifier {
            model: DensityModel::Mad(MadModel::train(&[10.0, 12.0, 9.0, 11.0, 30.0]).unwrap()),
            cutoff,
        })),
        OperatorKind::Explainer => {
            let params = ExplainParams::new(0.01, 2.0);
            if variant {
                Operator::Explainer(Box::new(BatchExplainer::new(params, 0.05)))
            } else {
                Operator::Explainer(Box::new(StreamingExplainer {
                    summarizer: StreamingSummarizer::new(params, 100, 0.05),
                }))
            }
        }
    }
}

/// Ingestor, any number of transformers, one classifier, one explainer.
fn well_formed(kinds: &[OperatorKind]) -> bool {
    use OperatorKind::*;
    let n = kinds.len();
    n >= 3
        && kinds[0] == Ingestor
        && kinds[1..n - 2].iter().all(|k| *k == Transformer)
        && kinds[n - 2] == Classifier
        && kinds[n - 1] == Explainer
}

fn pipeline_kinds() -> impl Strategy<Value = Vec<OperatorKind>> {
    let random = prop::collection::vec(prop::sample::select(KINDS.to_vec()), 0..7);
    let valid = (0usize..4).prop_map(|t| {
        let mut v = vec![OperatorKind::Ingestor];
        v.extend(std::iter::repeat_n(OperatorKind::Transformer, t));
        v.extend([OperatorKind::Classifier, OperatorKind::Explainer]);
        v
    });
    prop_oneof![random, valid]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn accepted_pipelines_run_without_type_errors(
        kinds in pipeline_kinds(),
        variants in prop::collection::vec(any::<bool>(), 7),
        n_points in 1u64..1500,
        cutoff in 0.5f64..20.0,
    ) {
        let sigs: Vec<OperatorSignature> = kinds.iter().map(|&k| OperatorSignature::of(k)).collect();
        prop_assert_eq!(typecheck_pipeline(&sigs).is_ok(), well_formed(&kinds));
        let stages: Vec<Operator> = kinds
            .iter()
            .zip(&variants)
            .map(|(&k, &v)| build(k, v, n_points, cutoff))
            .collect();
        match DynPipeline::new(stages) {
            Ok(mut p) => {
                prop_assert!(well_formed(&kinds));
                let mut dict = AttributeDictionary::new();
                let out = p.run(&mut dict);
                prop_assert!(!matches!(out, Err(Error::Composition { .. })), "{:?}", out.err());
                prop_assert!(out.is_ok());
            }
            Err(e) => {
                prop_assert!(!well_formed(&kinds));
                let is_composition = matches!(e, Error::Composition { .. });
                prop_assert!(is_composition);
            }
        }
    }
}
