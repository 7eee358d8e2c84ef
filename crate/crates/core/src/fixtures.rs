//! Compression profiles measured on MNIST and cifar10, shipped with the crate.

use crate::io::parse_profile;
use crate::model::SystemConfig;

pub const MNIST_PROFILE: &str = include_str!("../../../fixtures/mnist.profile");
pub const CIFAR10_PROFILE: &str = include_str!("../../../fixtures/cifar10.profile");

/// MLP on MNIST: ratios 49/16/4 take 1/3/10 slots at accuracy 0.89/0.97/0.98.
pub fn mnist() -> SystemConfig {
    parse_profile(MNIST_PROFILE).expect("bundled MNIST profile is valid")
}

/// MobileNet-v2 on cifar10: ratios 7/4/1 take 1/2/8 slots at accuracy 0.81/0.87/0.92.
pub fn cifar10() -> SystemConfig {
    parse_profile(CIFAR10_PROFILE).expect("bundled cifar10 profile is valid")
}
