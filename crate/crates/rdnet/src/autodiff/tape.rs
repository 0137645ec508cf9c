//! Reverse-mode tape over the fixed operation set the two networks need.
//!
//! Each forward call appends a node; `backward` walks the nodes in reverse
//! and accumulates gradients per node id. Summation orders are fixed, so
//! repeated runs are bit-identical.

use crate::autodiff::tensor::{Scalar, Tensor};
use crate::error::AutodiffError;

pub type ValueId = usize;

enum Op {
    Leaf,
    Conv2d {
        input: ValueId,
        kernel: ValueId,
        bias: ValueId,
    },
    MaxPool2 {
        input: ValueId,
        argmax: Vec<u32>,
    },
    Upsample2 {
        input: ValueId,
    },
    Relu {
        input: ValueId,
    },
    PRelu {
        input: ValueId,
        slope: ValueId,
    },
    ConcatChannels {
        a: ValueId,
        b: ValueId,
    },
    AddElementwise {
        a: ValueId,
        b: ValueId,
    },
    FullyConnected {
        input: ValueId,
        weight: ValueId,
        bias: ValueId,
    },
    GlobalAvgPool {
        input: ValueId,
    },
    Sum {
        input: ValueId,
    },
    Mse {
        pred: ValueId,
        target: ValueId,
    },
    Mae {
        pred: ValueId,
        target: ValueId,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
}

/// Gradients keyed by tape value id after a `backward` call.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: ValueId) -> Option<&Tensor<T>> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }

    /// Gradient for `id`, or a zero tensor of the given shape when the value
    /// did not influence the loss.
    pub fn get_or_zero(&self, id: ValueId, shape: [usize; 4]) -> Tensor<T> {
        match self.get(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape),
        }
    }
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, id: ValueId) -> &Tensor<T> {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op) -> ValueId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> ValueId {
        self.push(value, Op::Leaf)
    }

    /// Same-padded stride-1 convolution. Kernel is K×C×kh×kw, bias is a
    /// length-K tensor (any shape with K elements).
    pub fn conv2d(
        &mut self,
        input: ValueId,
        kernel: ValueId,
        bias: ValueId,
    ) -> Result<ValueId, AutodiffError> {
        let (ins, ks, bs) = (
            self.value(input).shape(),
            self.value(kernel).shape(),
            self.value(bias).shape(),
        );
        let [n, c, h, w] = ins;
        let [kout, kc, kh, kw] = ks;
        if kc != c {
            return Err(AutodiffError::Shape(format!(
                "conv2d: input has {c} channels but kernel expects {kc}"
            )));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(AutodiffError::Shape(format!(
                "conv2d: kernel size {kh}x{kw} must be odd for same padding"
            )));
        }
        if bs.iter().product::<usize>() != kout {
            return Err(AutodiffError::Shape(format!(
                "conv2d: bias has {} elements, expected {kout}",
                bs.iter().product::<usize>()
            )));
        }
        let mut out = Tensor::zeros([n, kout, h, w]);
        let ckk = c * kh * kw;
        let hw = h * w;
        let mut col = vec![T::ZERO; ckk * hw];
        for item in 0..n {
            im2col(self.value(input), item, kh, kw, &mut col);
            let kdata = self.value(kernel).data();
            let out_off = out.offset(item, 0, 0, 0);
            unsafe {
                T::gemm(
                    kout,
                    ckk,
                    hw,
                    T::ONE,
                    kdata.as_ptr(),
                    ckk as isize,
                    1,
                    col.as_ptr(),
                    hw as isize,
                    1,
                    T::ZERO,
                    out.data_mut()[out_off..].as_mut_ptr(),
                    hw as isize,
                    1,
                );
            }
            let bdata = self.value(bias).data().to_vec();
            for (k, &b) in bdata.iter().enumerate() {
                let base = out.offset(item, k, 0, 0);
                for v in &mut out.data_mut()[base..base + hw] {
                    *v += b;
                }
            }
        }
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                kernel,
                bias,
            },
        ))
    }

    /// 2×2 max pooling with stride 2; ties go to the first maximum in
    /// row-major order.
    pub fn maxpool2(&mut self, input: ValueId) -> Result<ValueId, AutodiffError> {
        let [n, c, h, w] = self.value(input).shape();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(AutodiffError::Shape(format!(
                "maxpool2: spatial size {h}x{w} must be even"
            )));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros([n, c, oh, ow]);
        let mut argmax = vec![0u32; out.numel()];
        let src = self.value(input);
        let mut oi = 0;
        for item in 0..n {
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = src.at(item, ch, oy * 2, ox * 2);
                        let mut best_idx = src.offset(item, ch, oy * 2, ox * 2);
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let v = src.at(item, ch, oy * 2 + dy, ox * 2 + dx);
                            if v > best {
                                best = v;
                                best_idx = src.offset(item, ch, oy * 2 + dy, ox * 2 + dx);
                            }
                        }
                        out.data_mut()[oi] = best;
                        argmax[oi] = best_idx as u32;
                        oi += 1;
                    }
                }
            }
        }
        debug_assert_eq!(oi, argmax.len());
        Ok(self.push(out, Op::MaxPool2 { input, argmax }))
    }

    /// Nearest-neighbor ×2 upsampling.
    pub fn upsample2(&mut self, input: ValueId) -> ValueId {
        let [n, c, h, w] = self.value(input).shape();
        let mut out = Tensor::zeros([n, c, h * 2, w * 2]);
        let src = self.value(input);
        for item in 0..n {
            for ch in 0..c {
                for y in 0..h * 2 {
                    for x in 0..w * 2 {
                        let v = src.at(item, ch, y / 2, x / 2);
                        out.set(item, ch, y, x, v);
                    }
                }
            }
        }
        self.push(out, Op::Upsample2 { input })
    }

    pub fn relu(&mut self, input: ValueId) -> ValueId {
        let src = self.value(input);
        let data = src
            .data()
            .iter()
            .map(|&v| if v > T::ZERO { v } else { T::ZERO })
            .collect();
        let out = Tensor::from_vec(src.shape(), data).expect("shape preserved");
        self.push(out, Op::Relu { input })
    }

    /// PReLU with one learnable slope per channel (slope tensor has C
    /// elements).
    pub fn prelu(&mut self, input: ValueId, slope: ValueId) -> Result<ValueId, AutodiffError> {
        let [n, c, h, w] = self.value(input).shape();
        if self.value(slope).numel() != c {
            return Err(AutodiffError::Shape(format!(
                "prelu: {} slopes for {c} channels",
                self.value(slope).numel()
            )));
        }
        let mut out = Tensor::zeros([n, c, h, w]);
        let src = self.value(input);
        let slopes = self.value(slope).data();
        let mut i = 0;
        for _item in 0..n {
            for ch in 0..c {
                let a = slopes[ch];
                for _ in 0..h * w {
                    let v = src.data()[i];
                    out.data_mut()[i] = if v >= T::ZERO { v } else { a * v };
                    i += 1;
                }
            }
        }
        Ok(self.push(out, Op::PRelu { input, slope }))
    }

    pub fn concat_channels(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, AutodiffError> {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        if sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3] {
            return Err(AutodiffError::Shape(format!(
                "concat_channels: incompatible shapes {sa:?} vs {sb:?}"
            )));
        }
        let [n, ca, h, w] = sa;
        let cb = sb[1];
        let mut out = Tensor::zeros([n, ca + cb, h, w]);
        let plane = h * w;
        for item in 0..n {
            let dst = out.offset(item, 0, 0, 0);
            let sa_off = self.value(a).offset(item, 0, 0, 0);
            let sb_off = self.value(b).offset(item, 0, 0, 0);
            let (a_len, b_len) = (ca * plane, cb * plane);
            let a_data = self.value(a).data()[sa_off..sa_off + a_len].to_vec();
            let b_data = self.value(b).data()[sb_off..sb_off + b_len].to_vec();
            out.data_mut()[dst..dst + a_len].copy_from_slice(&a_data);
            out.data_mut()[dst + a_len..dst + a_len + b_len].copy_from_slice(&b_data);
        }
        Ok(self.push(out, Op::ConcatChannels { a, b }))
    }

    pub fn add_elementwise(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, AutodiffError> {
        if !self.value(a).same_shape(self.value(b)) {
            return Err(AutodiffError::Shape(format!(
                "add_elementwise: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let out = Tensor::from_vec(self.value(a).shape(), data).expect("shape preserved");
        Ok(self.push(out, Op::AddElementwise { a, b }))
    }

    /// Dense layer. Input is flattened per batch item; weight is
    /// 1×1×out×in, bias has `out` elements. Output is N×1×1×out.
    pub fn fully_connected(
        &mut self,
        input: ValueId,
        weight: ValueId,
        bias: ValueId,
    ) -> Result<ValueId, AutodiffError> {
        let ins = self.value(input).shape();
        let n = ins[0];
        let feat = ins[1] * ins[2] * ins[3];
        let [_, _, rows, cols] = self.value(weight).shape();
        if cols != feat {
            return Err(AutodiffError::Shape(format!(
                "fully_connected: input features {feat} vs weight columns {cols}"
            )));
        }
        if self.value(bias).numel() != rows {
            return Err(AutodiffError::Shape(format!(
                "fully_connected: bias has {} elements, expected {rows}",
                self.value(bias).numel()
            )));
        }
        let mut out = Tensor::zeros([n, 1, 1, rows]);
        unsafe {
            // out (N×O) = X (N×I) · Wᵀ (I×O)
            T::gemm(
                n,
                feat,
                rows,
                T::ONE,
                self.value(input).data().as_ptr(),
                feat as isize,
                1,
                self.value(weight).data().as_ptr(),
                1,
                feat as isize,
                T::ZERO,
                out.data_mut().as_mut_ptr(),
                rows as isize,
                1,
            );
        }
        let bdata = self.value(bias).data().to_vec();
        for item in 0..n {
            for (o, &b) in bdata.iter().enumerate() {
                out.data_mut()[item * rows + o] += b;
            }
        }
        Ok(self.push(
            out,
            Op::FullyConnected {
                input,
                weight,
                bias,
            },
        ))
    }

    /// Per-channel spatial mean: N×C×H×W → N×C×1×1.
    pub fn global_avg_pool(&mut self, input: ValueId) -> ValueId {
        let [n, c, h, w] = self.value(input).shape();
        let mut out = Tensor::zeros([n, c, 1, 1]);
        let inv = T::from_f64(1.0 / (h * w) as f64);
        let src = self.value(input);
        for item in 0..n {
            for ch in 0..c {
                let base = src.offset(item, ch, 0, 0);
                let mut acc = T::ZERO;
                for &v in &src.data()[base..base + h * w] {
                    acc += v;
                }
                out.set(item, ch, 0, 0, acc * inv);
            }
        }
        self.push(out, Op::GlobalAvgPool { input })
    }

    /// Scalar sum of all entries.
    pub fn sum(&mut self, input: ValueId) -> ValueId {
        let mut acc = T::ZERO;
        for &v in self.value(input).data() {
            acc += v;
        }
        self.push(Tensor::scalar(acc), Op::Sum { input })
    }

    /// Mean squared error over all entries.
    pub fn loss_mse(&mut self, pred: ValueId, target: ValueId) -> Result<ValueId, AutodiffError> {
        if !self.value(pred).same_shape(self.value(target)) {
            return Err(AutodiffError::Shape(format!(
                "loss_mse: {:?} vs {:?}",
                self.value(pred).shape(),
                self.value(target).shape()
            )));
        }
        let inv = T::from_f64(1.0 / self.value(pred).numel() as f64);
        let mut acc = T::ZERO;
        for (&p, &t) in self.value(pred).data().iter().zip(self.value(target).data()) {
            let d = p - t;
            acc += d * d;
        }
        Ok(self.push(Tensor::scalar(acc * inv), Op::Mse { pred, target }))
    }

    /// Mean absolute error over all entries; subgradient at 0 is 0.
    pub fn loss_mae(&mut self, pred: ValueId, target: ValueId) -> Result<ValueId, AutodiffError> {
        if !self.value(pred).same_shape(self.value(target)) {
            return Err(AutodiffError::Shape(format!(
                "loss_mae: {:?} vs {:?}",
                self.value(pred).shape(),
                self.value(target).shape()
            )));
        }
        let inv = T::from_f64(1.0 / self.value(pred).numel() as f64);
        let mut acc = T::ZERO;
        for (&p, &t) in self.value(pred).data().iter().zip(self.value(target).data()) {
            acc += (p - t).abs();
        }
        Ok(self.push(Tensor::scalar(acc * inv), Op::Mae { pred, target }))
    }

    /// Reverse pass from a scalar root. Returns one gradient per reachable
    /// value id.
    pub fn backward(&self, root: ValueId) -> Result<Gradients<T>, AutodiffError> {
        if !self.value(root).is_scalar() {
            return Err(AutodiffError::Shape(format!(
                "backward: root must be scalar, got {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root] = Some(Tensor::scalar(T::ONE));
        for id in (0..=root).rev() {
            let Some(gout) = grads[id].take() else {
                continue;
            };
            self.accumulate(id, &gout, &mut grads);
            grads[id] = Some(gout);
        }
        Ok(Gradients { grads })
    }

    fn add_grad(&self, grads: &mut [Option<Tensor<T>>], id: ValueId, delta: Tensor<T>) {
        match &mut grads[id] {
            Some(g) => {
                for (a, &b) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn accumulate(&self, id: ValueId, gout: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
            } => {
                let (di, dk, db) = self.conv2d_backward(*input, *kernel, gout);
                self.add_grad(grads, *input, di);
                self.add_grad(grads, *kernel, dk);
                self.add_grad(grads, *bias, db);
            }
            Op::MaxPool2 { input, argmax } => {
                let mut di = Tensor::zeros(self.value(*input).shape());
                for (oi, &src_idx) in argmax.iter().enumerate() {
                    di.data_mut()[src_idx as usize] += gout.data()[oi];
                }
                self.add_grad(grads, *input, di);
            }
            Op::Upsample2 { input } => {
                let [n, c, h, w] = self.value(*input).shape();
                let mut di = Tensor::zeros([n, c, h, w]);
                for item in 0..n {
                    for ch in 0..c {
                        for y in 0..h * 2 {
                            for x in 0..w * 2 {
                                let g = gout.at(item, ch, y, x);
                                let idx = di.offset(item, ch, y / 2, x / 2);
                                di.data_mut()[idx] += g;
                            }
                        }
                    }
                }
                self.add_grad(grads, *input, di);
            }
            Op::Relu { input } => {
                let src = self.value(*input);
                let data = src
                    .data()
                    .iter()
                    .zip(gout.data())
                    .map(|(&x, &g)| if x > T::ZERO { g } else { T::ZERO })
                    .collect();
                let di = Tensor::from_vec(src.shape(), data).expect("shape preserved");
                self.add_grad(grads, *input, di);
            }
            Op::PRelu { input, slope } => {
                let src = self.value(*input);
                let [n, c, h, w] = src.shape();
                let slopes = self.value(*slope).data();
                let mut di = Tensor::zeros([n, c, h, w]);
                let mut da = Tensor::zeros(self.value(*slope).shape());
                let mut i = 0;
                for _item in 0..n {
                    for ch in 0..c {
                        let a = slopes[ch];
                        let mut acc = T::ZERO;
                        for _ in 0..h * w {
                            let x = src.data()[i];
                            let g = gout.data()[i];
                            if x >= T::ZERO {
                                di.data_mut()[i] = g;
                            } else {
                                di.data_mut()[i] = a * g;
                                acc += x * g;
                            }
                            i += 1;
                        }
                        da.data_mut()[ch] += acc;
                    }
                }
                self.add_grad(grads, *input, di);
                self.add_grad(grads, *slope, da);
            }
            Op::ConcatChannels { a, b } => {
                let sa = self.value(*a).shape();
                let sb = self.value(*b).shape();
                let plane = sa[2] * sa[3];
                let (a_len, b_len) = (sa[1] * plane, sb[1] * plane);
                let mut da = Tensor::zeros(sa);
                let mut db = Tensor::zeros(sb);
                for item in 0..sa[0] {
                    let src = item * (a_len + b_len);
                    da.data_mut()[item * a_len..(item + 1) * a_len]
                        .copy_from_slice(&gout.data()[src..src + a_len]);
                    db.data_mut()[item * b_len..(item + 1) * b_len]
                        .copy_from_slice(&gout.data()[src + a_len..src + a_len + b_len]);
                }
                self.add_grad(grads, *a, da);
                self.add_grad(grads, *b, db);
            }
            Op::AddElementwise { a, b } => {
                self.add_grad(grads, *a, gout.clone());
                self.add_grad(grads, *b, gout.clone());
            }
            Op::FullyConnected {
                input,
                weight,
                bias,
            } => {
                let ins = self.value(*input).shape();
                let n = ins[0];
                let feat = ins[1] * ins[2] * ins[3];
                let rows = self.value(*weight).shape()[2];
                let mut di = Tensor::zeros(ins);
                let mut dw = Tensor::zeros(self.value(*weight).shape());
                let mut db = Tensor::zeros(self.value(*bias).shape());
                unsafe {
                    // dX (N×I) = dOut (N×O) · W (O×I)
                    T::gemm(
                        n,
                        rows,
                        feat,
                        T::ONE,
                        gout.data().as_ptr(),
                        rows as isize,
                        1,
                        self.value(*weight).data().as_ptr(),
                        feat as isize,
                        1,
                        T::ZERO,
                        di.data_mut().as_mut_ptr(),
                        feat as isize,
                        1,
                    );
                    // dW (O×I) = dOutᵀ (O×N) · X (N×I)
                    T::gemm(
                        rows,
                        n,
                        feat,
                        T::ONE,
                        gout.data().as_ptr(),
                        1,
                        rows as isize,
                        self.value(*input).data().as_ptr(),
                        feat as isize,
                        1,
                        T::ZERO,
                        dw.data_mut().as_mut_ptr(),
                        feat as isize,
                        1,
                    );
                }
                for item in 0..n {
                    for o in 0..rows {
                        db.data_mut()[o] += gout.data()[item * rows + o];
                    }
                }
                self.add_grad(grads, *input, di);
                self.add_grad(grads, *weight, dw);
                self.add_grad(grads, *bias, db);
            }
            Op::GlobalAvgPool { input } => {
                let [n, c, h, w] = self.value(*input).shape();
                let inv = T::from_f64(1.0 / (h * w) as f64);
                let mut di = Tensor::zeros([n, c, h, w]);
                for item in 0..n {
                    for ch in 0..c {
                        let g = gout.at(item, ch, 0, 0) * inv;
                        let base = di.offset(item, ch, 0, 0);
                        for v in &mut di.data_mut()[base..base + h * w] {
                            *v = g;
                        }
                    }
                }
                self.add_grad(grads, *input, di);
            }
            Op::Sum { input } => {
                let g = gout.scalar_value();
                let src = self.value(*input);
                let di = Tensor::from_vec(src.shape(), vec![g; src.numel()])
                    .expect("shape preserved");
                self.add_grad(grads, *input, di);
            }
            Op::Mse { pred, target } => {
                let g = gout.scalar_value();
                let p = self.value(*pred);
                let t = self.value(*target);
                let scale = T::from_f64(2.0 / p.numel() as f64) * g;
                let dp: Vec<T> = p
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(&pv, &tv)| scale * (pv - tv))
                    .collect();
                let dt: Vec<T> = dp.iter().map(|&v| -v).collect();
                self.add_grad(
                    grads,
                    *pred,
                    Tensor::from_vec(p.shape(), dp).expect("shape preserved"),
                );
                self.add_grad(
                    grads,
                    *target,
                    Tensor::from_vec(t.shape(), dt).expect("shape preserved"),
                );
            }
            Op::Mae { pred, target } => {
                let g = gout.scalar_value();
                let p = self.value(*pred);
                let t = self.value(*target);
                let scale = T::from_f64(1.0 / p.numel() as f64) * g;
                let dp: Vec<T> = p
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(&pv, &tv)| {
                        if pv > tv {
                            scale
                        } else if pv < tv {
                            -scale
                        } else {
                            T::ZERO
                        }
                    })
                    .collect();
                let dt: Vec<T> = dp.iter().map(|&v| -v).collect();
                self.add_grad(
                    grads,
                    *pred,
                    Tensor::from_vec(p.shape(), dp).expect("shape preserved"),
                );
                self.add_grad(
                    grads,
                    *target,
                    Tensor::from_vec(t.shape(), dt).expect("shape preserved"),
                );
            }
        }
    }

    fn conv2d_backward(
        &self,
        input: ValueId,
        kernel: ValueId,
        gout: &Tensor<T>,
    ) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
        let src = self.value(input);
        let ker = self.value(kernel);
        let [n, c, h, w] = src.shape();
        let [kout, _, kh, kw] = ker.shape();
        let ckk = c * kh * kw;
        let hw = h * w;
        let mut di = Tensor::zeros([n, c, h, w]);
        let mut dk = Tensor::zeros(ker.shape());
        let mut db = Tensor::zeros([1, 1, 1, kout]);
        let mut col = vec![T::ZERO; ckk * hw];
        let mut dcol = vec![T::ZERO; ckk * hw];
        for item in 0..n {
            let g_off = gout.offset(item, 0, 0, 0);
            let g_ptr = gout.data()[g_off..].as_ptr();
            im2col(src, item, kh, kw, &mut col);
            unsafe {
                // dK (K×CKK) += dOut (K×HW) · colᵀ (HW×CKK)
                T::gemm(
                    kout,
                    hw,
                    ckk,
                    T::ONE,
                    g_ptr,
                    hw as isize,
                    1,
                    col.as_ptr(),
                    1,
                    hw as isize,
                    T::ONE,
                    dk.data_mut().as_mut_ptr(),
                    ckk as isize,
                    1,
                );
                // dcol (CKK×HW) = Kᵀ (CKK×K) · dOut (K×HW)
                T::gemm(
                    ckk,
                    kout,
                    hw,
                    T::ONE,
                    ker.data().as_ptr(),
                    1,
                    ckk as isize,
                    g_ptr,
                    hw as isize,
                    1,
                    T::ZERO,
                    dcol.as_mut_ptr(),
                    hw as isize,
                    1,
                );
            }
            col2im_add(&mut di, item, kh, kw, &dcol);
            for k in 0..kout {
                let base = gout.offset(item, k, 0, 0);
                let mut acc = T::ZERO;
                for &gv in &gout.data()[base..base + hw] {
                    acc += gv;
                }
                db.data_mut()[k] += acc;
            }
        }
        (di, dk, db)
    }
}

/// Unfold one batch item into a (C·kh·kw) × (H·W) matrix with zero padding.
fn im2col<T: Scalar>(input: &Tensor<T>, item: usize, kh: usize, kw: usize, col: &mut [T]) {
    let [_, c, h, w] = input.shape();
    let (ph, pw) = (kh / 2, kw / 2);
    let hw = h * w;
    let mut r = 0;
    for ch in 0..c {
        for dy in 0..kh {
            for dx in 0..kw {
                let row = &mut col[r * hw..(r + 1) * hw];
                r += 1;
                for y in 0..h {
                    let sy = y as isize + dy as isize - ph as isize;
                    if sy < 0 || sy >= h as isize {
                        row[y * w..(y + 1) * w].fill(T::ZERO);
                        continue;
                    }
                    let src_base = input.offset(item, ch, sy as usize, 0);
                    for x in 0..w {
                        let sx = x as isize + dx as isize - pw as isize;
                        row[y * w + x] = if sx < 0 || sx >= w as isize {
                            T::ZERO
                        } else {
                            input.data()[src_base + sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Fold a column-gradient matrix back onto the input gradient (adds).
fn col2im_add<T: Scalar>(di: &mut Tensor<T>, item: usize, kh: usize, kw: usize, dcol: &[T]) {
    let [_, c, h, w] = di.shape();
    let (ph, pw) = (kh / 2, kw / 2);
    let hw = h * w;
    let mut r = 0;
    for ch in 0..c {
        for dy in 0..kh {
            for dx in 0..kw {
                let row = &dcol[r * hw..(r + 1) * hw];
                r += 1;
                for y in 0..h {
                    let sy = y as isize + dy as isize - ph as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst_base = di.offset(item, ch, sy as usize, 0);
                    for x in 0..w {
                        let sx = x as isize + dx as isize - pw as isize;
                        if sx >= 0 && sx < w as isize {
                            di.data_mut()[dst_base + sx as usize] += row[y * w + x];
                        }
                    }
                }
            }
        }
    }
}
