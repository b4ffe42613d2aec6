use std::collections::{BTreeMap, HashMap};

use super::{Graph, Op};
use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::Tensor4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExecOptions {
    /// Parallelize convolutions over output channels. Results are bit-identical
    /// to sequential execution because each output element keeps its summation order.
    pub parallel: bool,
}

/// Runs the graph and returns every requested tap plus the graph outputs.
pub fn execute(g: &Graph, input: &Tensor4, taps: &[&str]) -> Result<BTreeMap<String, Tensor4>> {
    execute_with(g, input, taps, ExecOptions::default())
}

pub fn execute_with(
    g: &Graph,
    input: &Tensor4,
    taps: &[&str],
    opts: ExecOptions,
) -> Result<BTreeMap<String, Tensor4>> {
    for tap in taps {
        if !g.has_tensor(tap) {
            return Err(Error::UnknownTap(tap.to_string()));
        }
    }
    // Fails early with node context on any shape problem.
    g.infer_shapes(input.shape())?;

    let mut wanted: Vec<&str> = taps.to_vec();
    wanted.extend(g.outputs.iter().map(String::as_str));

    // Index of the last node reading each tensor, so intermediates can be dropped.
    let mut last_use: HashMap<&str, usize> = HashMap::new();
    for (i, node) in g.nodes.iter().enumerate() {
        for inp in &node.inputs {
            last_use.insert(inp, i);
        }
    }

    let mut live: HashMap<&str, Tensor4> = HashMap::new();
    let mut result = BTreeMap::new();
    let pre = preprocess(g, input)?;
    if wanted.contains(&g.input.name.as_str()) {
        result.insert(g.input.name.clone(), pre.clone());
    }
    live.insert(&g.input.name, pre);

    for (i, node) in g.nodes.iter().enumerate() {
        let ins: Vec<&Tensor4> = node
            .inputs
            .iter()
            .map(|id| live.get(id.as_str()).expect("validated input is live"))
            .collect();
        let out = eval(&node.op, &ins, opts).map_err(|e| Error::at_node(&node.id, e))?;
        for inp in &node.inputs {
            if last_use.get(inp.as_str()) == Some(&i) {
                live.remove(inp.as_str());
            }
        }
        if wanted.contains(&node.id.as_str()) {
            result.insert(node.id.clone(), out.clone());
        }
        if last_use.contains_key(node.id.as_str()) {
            live.insert(&node.id, out);
        }
    }
    Ok(result)
}

fn preprocess(g: &Graph, input: &Tensor4) -> Result<Tensor4> {
    let Some(pre) = &g.preprocessing else {
        return Ok(input.clone());
    };
    let mut out = input.clone();
    for c in 0..input.shape().c {
        let (m, s) = (pre.mean[c], pre.std[c]);
        for v in out.plane_mut(0, c) {
            *v = (*v - m) / s;
        }
    }
    Ok(out)
}

pub(crate) fn eval(op: &Op, ins: &[&Tensor4], opts: ExecOptions) -> Result<Tensor4> {
    let x = ins[0];
    match op {
        Op::Conv2d(c) => ops::conv2d_exec(x, &c.weight, c.bias.as_deref(), c.params, opts.parallel),
        Op::BatchNorm(bn) => ops::batch_norm(
            x,
            &bn.gamma,
            &bn.beta,
            &bn.running_mean,
            &bn.running_var,
            bn.eps,
        ),
        Op::Activation(kind) => Ok(ops::activation(x, *kind)),
        Op::Pool { kind, params } => ops::pool(x, *kind, *params),
        Op::Upsample { factor } => ops::upsample_nearest(x, *factor),
        Op::Concat => ops::concat_channels(ins),
        Op::Add => ops::add(x, ins[1]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{BatchNorm, GraphBuilder, Preprocessing};
    use crate::ops::ConvParams;
    use crate::tensor::Shape4;

    fn tiny() -> Graph {
        let mut b = GraphBuilder::new("tiny", "x", 1, 2, 2);
        // Two 1x1 filters: 2*x - 1 and -x + 0.5
        let w = Tensor4::from_vec(Shape4::new(2, 1, 1, 1), vec![2.0, -1.0]).unwrap();
        b.conv("c", "x", w, Some(vec![-1.0, 0.5]), ConvParams::default());
        b.relu("r", "c");
        b.output("r");
        b.finish().unwrap()
    }

    #[test]
    fn conv_relu_hand_computed() {
        let g = tiny();
        let x = Tensor4::from_vec(Shape4::new(1, 1, 2, 2), vec![0.0, 0.25, 1.0, 2.0]).unwrap();
        let out = execute(&g, &x, &[]).unwrap();
        // channel 0: max(2x-1, 0) = [0, 0, 1, 3]; channel 1: max(0.5-x, 0) = [0.5, 0.25, 0, 0]
        assert_eq!(out["r"].data(), &[0.0, 0.0, 1.0, 3.0, 0.5, 0.25, 0.0, 0.0]);
    }

    #[test]
    fn taps_and_determinism() {
        let g = tiny();
        let x = Tensor4::from_vec(Shape4::new(1, 1, 2, 2), vec![0.1, 0.7, 0.3, 0.9]).unwrap();
        let a = execute(&g, &x, &["x", "c"]).unwrap();
        let b = execute(&g, &x, &["x", "c"]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.keys().collect::<Vec<_>>(), vec!["c", "r", "x"]);
        assert_eq!(a["x"], x);
    }

    #[test]
    fn input_tap_is_preprocessed() {
        let mut b = GraphBuilder::new("pre", "img", 2, 1, 1).preprocessing(Preprocessing {
            mean: vec![0.5, 0.0],
            std: vec![0.25, 2.0],
        });
        b.relu("r", "img");
        b.output("r");
        let g = b.finish().unwrap();
        let x = Tensor4::from_vec(Shape4::new(1, 2, 1, 1), vec![1.0, 1.0]).unwrap();
        let out = execute(&g, &x, &["img"]).unwrap();
        assert_eq!(out["img"].data(), &[2.0, 0.5]);
    }

    #[test]
    fn unknown_tap_and_bad_shapes() {
        let g = tiny();
        let x = Tensor4::zeros(Shape4::new(1, 1, 2, 2));
        assert!(matches!(execute(&g, &x, &["nope"]), Err(Error::UnknownTap(_))));
        let wrong = Tensor4::zeros(Shape4::new(1, 3, 2, 2));
        assert!(execute(&g, &wrong, &[]).is_err());
        let batch = Tensor4::zeros(Shape4::new(2, 1, 2, 2));
        assert!(execute(&g, &batch, &[]).is_err());
    }

    #[test]
    fn reordered_graph_is_bitwise_identical() {
        let mut b = GraphBuilder::new("two", "x", 2, 5, 5);
        let w1 = Tensor4::from_fn(Shape4::new(3, 2, 3, 3), |o, i, h, w| ((o * 7 + i * 3 + h * 5 + w) % 11) as f32 / 11.0 - 0.4);
        let w2 = Tensor4::from_fn(Shape4::new(3, 2, 1, 1), |o, i, _, _| (o as f32 - i as f32) * 0.3);
        b.conv("a", "x", w1, None, ConvParams { padding: 1, ..Default::default() });
        b.conv("b", "x", w2, Some(vec![0.1, 0.2, 0.3]), ConvParams::default());
        b.batch_norm(
            "bn",
            "b",
            BatchNorm {
                gamma: vec![1.0, 2.0, 0.5],
                beta: vec![0.0, -0.1, 0.1],
                running_mean: vec![0.0; 3],
                running_var: vec![1.0; 3],
                eps: 1e-5,
            },
        );
        b.add("s", "a", "bn");
        b.relu("r", "s");
        b.output("r");
        let g = b.finish().unwrap();
        let mut swapped = g.clone();
        swapped.nodes.swap(0, 1);
        swapped.validate().unwrap();
        let x = Tensor4::from_fn(Shape4::new(1, 2, 5, 5), |_, c, h, w| ((c + h * w) as f32).sin());
        assert_eq!(execute(&g, &x, &[]).unwrap(), execute(&swapped, &x, &[]).unwrap());
        let par = execute_with(&g, &x, &[], ExecOptions { parallel: true }).unwrap();
        assert_eq!(par, execute(&g, &x, &[]).unwrap());
    }
}
