use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        for (axis, (x, y)) in a.shape().iter().zip(b.shape()).enumerate() {
            if x != y {
                return Err(TensorError::AxisMismatch {
                    op,
                    axis,
                    expected: *x,
                    got: *y,
                });
            }
        }
        return Err(TensorError::ShapeMismatch {
            op,
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    Ok(())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let data: Vec<f32> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x + y).collect();
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            if pa.requires_grad() {
                pa.accumulate_grad(g);
            }
            if pb.requires_grad() {
                pb.accumulate_grad(g);
            }
        }),
    ))
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("sub", a, b)?;
    let data: Vec<f32> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x - y).collect();
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            if pa.requires_grad() {
                pa.accumulate_grad(g);
            }
            if pb.requires_grad() {
                let neg: Vec<f32> = g.iter().map(|v| -v).collect();
                pb.accumulate_grad(&neg);
            }
        }),
    ))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    let data: Vec<f32> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).collect();
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            if pa.requires_grad() {
                let ga: Vec<f32> = g.iter().zip(pb.data().iter()).map(|(gi, y)| gi * y).collect();
                pa.accumulate_grad(&ga);
            }
            if pb.requires_grad() {
                let gb: Vec<f32> = g.iter().zip(pa.data().iter()).map(|(gi, x)| gi * x).collect();
                pb.accumulate_grad(&gb);
            }
        }),
    ))
}

/// Multiply by a compile-time constant.
pub fn scale(a: &Tensor, factor: f32) -> Tensor {
    let data: Vec<f32> = a.data().iter().map(|x| x * factor).collect();
    let pa = a.clone();
    Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g| {
            let ga: Vec<f32> = g.iter().map(|gi| gi * factor).collect();
            pa.accumulate_grad(&ga);
        }),
    )
}

pub fn add_scalar(a: &Tensor, c: f32) -> Tensor {
    let data: Vec<f32> = a.data().iter().map(|x| x + c).collect();
    let pa = a.clone();
    Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g| pa.accumulate_grad(g)),
    )
}

pub fn neg(a: &Tensor) -> Tensor {
    scale(a, -1.0)
}

fn unary(
    a: &Tensor,
    f: impl Fn(f32) -> f32,
    dfdx_from_in_out: impl Fn(f32, f32) -> f32 + 'static,
) -> Tensor {
    let data: Vec<f32> = a.data().iter().map(|&x| f(x)).collect();
    let pa = a.clone();
    let out = data.clone();
    Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g| {
            let input = pa.data();
            let ga: Vec<f32> = g
                .iter()
                .zip(input.iter().zip(out.iter()))
                .map(|(gi, (&x, &y))| gi * dfdx_from_in_out(x, y))
                .collect();
            drop(input);
            pa.accumulate_grad(&ga);
        }),
    )
}

pub fn relu(a: &Tensor) -> Tensor {
    unary(a, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
}

/// ELU with alpha = 1.
pub fn elu(a: &Tensor) -> Tensor {
    unary(
        a,
        |x| if x > 0.0 { x } else { x.exp() - 1.0 },
        |x, y| if x > 0.0 { 1.0 } else { y + 1.0 },
    )
}

pub fn sigmoid(a: &Tensor) -> Tensor {
    unary(
        a,
        |x| 1.0 / (1.0 + (-x).exp()),
        |_, y| y * (1.0 - y),
    )
}

pub fn tanh(a: &Tensor) -> Tensor {
    unary(a, |x| x.tanh(), |_, y| 1.0 - y * y)
}

pub fn exp(a: &Tensor) -> Tensor {
    unary(a, |x| x.exp(), |_, y| y)
}

pub fn ln(a: &Tensor) -> Tensor {
    unary(a, |x| x.ln(), |x, _| 1.0 / x)
}

pub fn sqrt(a: &Tensor) -> Tensor {
    unary(a, |x| x.sqrt(), |_, y| 0.5 / y)
}

pub fn square(a: &Tensor) -> Tensor {
    unary(a, |x| x * x, |x, _| 2.0 * x)
}

/// Clamp with pass-through gradient inside the interval and zero outside.
pub fn clamp(a: &Tensor, lo: f32, hi: f32) -> Tensor {
    unary(
        a,
        move |x| x.clamp(lo, hi),
        move |x, _| if x > lo && x < hi { 1.0 } else { 0.0 },
    )
}

/// Elementwise minimum; the gradient follows the smaller operand
/// (ties go to `a`).
pub fn min_elem(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("min_elem", a, b)?;
    let data: Vec<f32> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x.min(*y)).collect();
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let av = pa.data().clone();
            let bv = pb.data().clone();
            if pa.requires_grad() {
                let ga: Vec<f32> = g
                    .iter()
                    .zip(av.iter().zip(bv.iter()))
                    .map(|(gi, (x, y))| if x <= y { *gi } else { 0.0 })
                    .collect();
                pa.accumulate_grad(&ga);
            }
            if pb.requires_grad() {
                let gb: Vec<f32> = g
                    .iter()
                    .zip(av.iter().zip(bv.iter()))
                    .map(|(gi, (x, y))| if x <= y { 0.0 } else { *gi })
                    .collect();
                pb.accumulate_grad(&gb);
            }
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_at_zero_is_half() {
        let x = Tensor::from_vec(vec![0.0], &[1]).unwrap();
        assert_eq!(sigmoid(&x).item(), 0.5);
    }

    #[test]
    fn relu_negative_value_and_grad_are_zero() {
        let x = Tensor::param(vec![-1.0], &[1]).unwrap();
        let y = relu(&x);
        assert_eq!(y.item(), 0.0);
        crate::ops::sum(&y).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0]);
    }

    #[test]
    fn min_elem_routes_gradient_to_smaller() {
        let a = Tensor::param(vec![1.0, 5.0], &[2]).unwrap();
        let b = Tensor::param(vec![2.0, 3.0], &[2]).unwrap();
        let m = min_elem(&a, &b).unwrap();
        assert_eq!(m.to_vec(), vec![1.0, 3.0]);
        crate::ops::sum(&m).backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0, 0.0]);
        assert_eq!(b.grad().unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn shape_mismatch_names_axis() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 4]);
        match add(&a, &b) {
            Err(TensorError::AxisMismatch { axis, expected, got, .. }) => {
                assert_eq!((axis, expected, got), (1, 3, 4));
            }
            other => panic!("expected axis mismatch, got {other:?}"),
        }
    }
}
