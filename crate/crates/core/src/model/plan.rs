use serde::Serialize;

use super::{LayerSpec, ModelGraph};
use crate::error::{Error, Result};
use crate::ops::{conv_out_dim, pool_out_dim};

/// One row of the per-layer size table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PlanRow {
    pub layer: String,
    /// `conv`, `batchnorm`, `relu`, `maxpool`, `avgpool`, `fc` or `extractor`.
    pub kind: &'static str,
    pub kernel: Option<usize>,
    pub count: Option<usize>,
    pub stride: Option<usize>,
    /// Output `(channels, height, width)`.
    pub out: [usize; 3],
}

fn row(layer: impl Into<String>, kind: &'static str, out: [usize; 3]) -> PlanRow {
    PlanRow {
        layer: layer.into(),
        kind,
        kernel: None,
        count: None,
        stride: None,
        out,
    }
}

fn display_name(name: &str) -> String {
    match name.strip_prefix("conv") {
        Some(idx) => format!("Conv {idx}"),
        None => name.to_uppercase(),
    }
}

/// Walks the graph and reports every layer's output size. Fails at the first
/// layer whose input is too small.
pub fn shape_plan(graph: &ModelGraph) -> Result<Vec<PlanRow>> {
    let (c0, h0, w0) = graph.input_size;
    if c0 != 3 {
        return Err(Error::Plan {
            layer: "input".into(),
            reason: format!("expected 3 channels, got {c0}"),
        });
    }
    let mut rows = Vec::new();
    for (name, kernel, count) in graph.extractor.layer_rows() {
        if h0 < 1 || w0 < 1 {
            return Err(Error::Plan {
                layer: name,
                reason: "empty input".into(),
            });
        }
        rows.push(PlanRow {
            kernel: Some(kernel),
            count: Some(count),
            stride: Some(1),
            ..row(name, "extractor", [count, h0, w0])
        });
    }
    let (mut c, mut h, mut w) = (graph.extractor.out_channels(), h0, w0);
    let mut pools = 0;
    for spec in &graph.hfe_layers {
        match spec {
            LayerSpec::Conv {
                name,
                kernels,
                kernel,
                stride,
                padding,
            } => {
                let label = display_name(name);
                h = conv_out_dim(h, *kernel, *stride, *padding, &label)?;
                w = conv_out_dim(w, *kernel, *stride, *padding, &label)?;
                c = *kernels;
                rows.push(PlanRow {
                    kernel: Some(*kernel),
                    count: Some(*kernels),
                    stride: Some(*stride),
                    ..row(label, "conv", [c, h, w])
                });
            }
            LayerSpec::BatchNorm { name } => rows.push(row(name.to_uppercase(), "batchnorm", [c, h, w])),
            LayerSpec::Relu => rows.push(row("ReLU", "relu", [c, h, w])),
            LayerSpec::MaxPool {
                kernel,
                stride,
                ceil_mode,
            }
            | LayerSpec::AvgPool {
                kernel,
                stride,
                ceil_mode,
            } => {
                pools += 1;
                let (label, kind) = match spec {
                    LayerSpec::MaxPool { .. } => (format!("MaxPool {pools}"), "maxpool"),
                    _ => (format!("AvgPool {pools}"), "avgpool"),
                };
                let fail = |e: Error| match e {
                    Error::Plan { reason, .. } => Error::Plan {
                        layer: label.clone(),
                        reason,
                    },
                    other => other,
                };
                h = pool_out_dim(h, *kernel, *stride, *ceil_mode).map_err(fail)?;
                w = pool_out_dim(w, *kernel, *stride, *ceil_mode).map_err(fail)?;
                rows.push(PlanRow {
                    kernel: Some(*kernel),
                    stride: Some(*stride),
                    ..row(label, kind, [c, h, w])
                });
            }
        }
    }
    for (i, &width) in graph
        .fc_hidden
        .iter()
        .chain(std::iter::once(&graph.num_classes))
        .enumerate()
    {
        rows.push(PlanRow {
            count: Some(width),
            ..row(format!("FC {}", i + 1), "fc", [width, 1, 1])
        });
    }
    Ok(rows)
}

/// Fixed-width text rendering of a plan, one layer per line.
pub fn render_plan(rows: &[PlanRow]) -> String {
    let opt = |v: Option<usize>| v.map_or("-".to_string(), |v| v.to_string());
    let mut out = format!(
        "{:<18} {:<10} {:>6} {:>6} {:>6}  {}\n",
        "Layer", "Kind", "Kernel", "Count", "Stride", "Output"
    );
    for r in rows {
        let kernel = r.kernel.map(|k| format!("{k}x{k}"));
        out.push_str(&format!(
            "{:<18} {:<10} {:>6} {:>6} {:>6}  {}x{}x{}\n",
            r.layer,
            r.kind,
            kernel.unwrap_or_else(|| "-".into()),
            opt(r.count),
            opt(r.stride),
            r.out[1],
            r.out[2],
            r.out[0]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractor::ExtractorConfig;
    use crate::model::{build_amtennet, build_mini};

    #[test]
    fn reproduces_reference_ladder() {
        let g = build_amtennet(8, ExtractorConfig::amten()).unwrap();
        let rows = shape_plan(&g).unwrap();
        let table: Vec<(String, usize)> = rows
            .iter()
            .filter(|r| matches!(r.kind, "extractor" | "conv" | "maxpool"))
            .map(|r| (r.layer.clone(), r.out[1]))
            .collect();
        let expected = [
            ("Conv 1", 128),
            ("Conv 2", 128),
            ("Conv 3", 128),
            ("Conv 4", 128),
            ("Conv 5", 128),
            ("Conv 6", 128),
            ("MaxPool 1", 64),
            ("Conv 7", 62),
            ("MaxPool 2", 31),
            ("Conv 8", 29),
            ("MaxPool 3", 14),
            ("Conv 9", 14),
            ("MaxPool 4", 7),
        ];
        let expected: Vec<(String, usize)> = expected.iter().map(|(n, s)| (n.to_string(), *s)).collect();
        assert_eq!(table, expected);
    }

    #[test]
    fn failure_names_the_layer() {
        let g = build_amtennet(8, ExtractorConfig::amten()).unwrap();
        let mut small = g.clone();
        small.input_size = (3, 20, 20);
        match shape_plan(&small) {
            Err(Error::Plan { layer, .. }) => assert!(layer.starts_with("MaxPool") || layer.starts_with("Conv"), "{layer}"),
            other => panic!("expected plan failure, got {other:?}"),
        }
        small.input_size = (3, 4, 4);
        match shape_plan(&small) {
            Err(Error::Plan { layer, .. }) => assert_eq!(layer, "Conv 7"),
            other => panic!("expected plan failure, got {other:?}"),
        }
    }

    #[test]
    fn mini_at_64_plans() {
        let g = build_mini(0.5, 64, 4, ExtractorConfig::amten()).unwrap();
        let rows = shape_plan(&g).unwrap();
        let last_pool = rows.iter().filter(|r| r.kind == "maxpool").last().unwrap();
        assert_eq!(last_pool.out, [64, 3, 3]);
        assert!(render_plan(&rows).contains("Conv 9"));
    }
}
