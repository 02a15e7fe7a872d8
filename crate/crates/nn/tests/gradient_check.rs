//! Autograd against central finite differences.

mod support;

use argqual_core::Task;
use argqual_nn::model::Example;
use candle_core::Tensor;

fn loss(model: &argqual_nn::MultiTaskModel, batch: &[&Example]) -> f64 {
    model.batch_loss(Task::ArgumentQuality, batch, None).unwrap().to_scalar::<f64>().unwrap()
}

fn check(param: &str, model: &argqual_nn::MultiTaskModel, batch: &[&Example], probes: &[usize]) {
    let var = model.params().get(param).unwrap().clone();
    let grads = model.batch_loss(Task::ArgumentQuality, batch, None).unwrap().backward().unwrap();
    let analytic = grads.get(var.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
    let shape = var.dims().to_vec();
    let base = var.as_tensor().flatten_all().unwrap().to_vec1::<f64>().unwrap();
    let h = 1e-5;
    for &i in probes {
        let i = i % base.len();
        let eval_at = |delta: f64| {
            let mut v = base.clone();
            v[i] += delta;
            var.set(&Tensor::from_vec(v, shape.as_slice(), var.device()).unwrap()).unwrap();
            loss(model, batch)
        };
        let numeric = (eval_at(h) - eval_at(-h)) / (2.0 * h);
        var.set(&Tensor::from_vec(base.clone(), shape.as_slice(), var.device()).unwrap()).unwrap();
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
        assert!(rel < 1e-4, "{param}[{i}]: analytic {a:e} vs numeric {numeric:e} (rel {rel:e})");
    }
}

#[test]
fn head_gradients_match_finite_differences() {
    let model = support::model(&[Task::ArgumentQuality], 4);
    // Push the output weights away from zero so every head parameter has a sizeable gradient.
    let w2 = model.params().get("heads.AQ.out.weight").unwrap();
    w2.set(&(w2.as_tensor() * 25.0).unwrap()).unwrap();
    let corpus = support::regression_corpus(6, "toy", support::spread);
    let examples = model.examples(&corpus, Task::ArgumentQuality).unwrap();
    let batch: Vec<&Example> = examples.iter().collect();
    check("heads.AQ.out.weight", &model, &batch, &[0, 17, 42, 99]);
    check("heads.AQ.out.bias", &model, &batch, &[0]);
    check("heads.AQ.hidden.weight", &model, &batch, &[0, 129, 5000, 12_345]);
    check("heads.AQ.hidden.bias", &model, &batch, &[3, 50, 97]);
}

#[test]
fn encoder_gradients_match_finite_differences() {
    let model = support::model(&[Task::ArgumentQuality], 5);
    let w2 = model.params().get("heads.AQ.out.weight").unwrap();
    w2.set(&(w2.as_tensor() * 25.0).unwrap()).unwrap();
    let corpus = support::regression_corpus(4, "toy", support::spread);
    let examples = model.examples(&corpus, Task::ArgumentQuality).unwrap();
    let batch: Vec<&Example> = examples.iter().collect();
    let layer = model.params().iter().map(|(k, _)| k.clone()).find(|k| k.contains("layer.3") && k.ends_with("output.dense.weight")).unwrap();
    check(&layer, &model, &batch, &[1, 300, 1000]);
}
