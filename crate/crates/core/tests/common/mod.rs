#![allow(dead_code)]

use std::collections::BTreeMap;

use complyctl_core::chain::{ChainFile, JointRecord, LinkRecord, SiteRecord};
use complyctl_core::motor::MotorRecord;
use complyctl_core::Chain;
use nalgebra::{DVector, UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn motor() -> MotorRecord {
    MotorRecord { kv: 0.5, rw: 3.0, kt: 0.02, eta: 0.8, vbus: 12.0, eps_vel: 0.01, has_current_sensor: false }
}

fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.2 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random chain with `n` joints; `branching` lets parents be any earlier
/// joint. One site at the last joint plus one at a random joint.
pub fn random_chain(rng: &mut ChaCha8Rng, n: usize, branching: bool) -> Chain {
    let mut joints = Vec::new();
    let mut links = Vec::new();
    for i in 0..n {
        let parent = match i {
            0 => None,
            _ if branching => Some(rng.random_range(0..i)),
            _ => Some(i - 1),
        };
        let rot = UnitQuaternion::from_scaled_axis(unit(rng) * rng.random_range(0.0..3.0));
        let axis = unit(rng);
        joints.push(JointRecord {
            name: format!("j{i}"),
            parent,
            origin_translation: [rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(0.0..0.3)],
            origin_rotation: [rot.w, rot.i, rot.j, rot.k],
            axis: [axis.x, axis.y, axis.z],
            limits: [-3.0, 3.0],
            gear_ratio: rng.random_range(10.0..300.0),
            motor: "m".into(),
        });
        links.push(LinkRecord {
            mass: rng.random_range(0.05..1.5),
            com: [rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15)],
        });
    }
    let sites = vec![
        SiteRecord {
            name: "tip".into(),
            parent: n - 1,
            translation: [0.1, 0.02, -0.03],
            rotation: [1.0, 0.0, 0.0, 0.0],
        },
        SiteRecord {
            name: "mid".into(),
            parent: rng.random_range(0..n),
            translation: [0.05, -0.04, 0.02],
            rotation: [0.0, 1.0, 0.0, 0.0],
        },
    ];
    let file = ChainFile {
        gravity: [0.0, 0.0, -9.81],
        motors: BTreeMap::from([("m".to_string(), motor())]),
        joints,
        links,
        sites,
    };
    Chain::from_file(&file).expect("random chain is valid")
}

pub fn random_q(rng: &mut ChaCha8Rng, n: usize, span: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-span..span))
}

/// Planar arm in the xy plane with joints about z and unit-mass links.
pub fn planar(lengths: &[f64]) -> Chain {
    let mut joints = Vec::new();
    let mut links = Vec::new();
    for (i, _) in lengths.iter().enumerate() {
        joints.push(JointRecord {
            name: format!("j{i}"),
            parent: if i == 0 { None } else { Some(i - 1) },
            origin_translation: if i == 0 { [0.0; 3] } else { [lengths[i - 1], 0.0, 0.0] },
            origin_rotation: [1.0, 0.0, 0.0, 0.0],
            axis: [0.0, 0.0, 1.0],
            limits: [-3.0, 3.0],
            gear_ratio: 100.0,
            motor: "m".into(),
        });
        links.push(LinkRecord { mass: 1.0, com: [lengths[i] / 2.0, 0.0, 0.0] });
    }
    let file = ChainFile {
        gravity: [0.0, 0.0, -9.81],
        motors: BTreeMap::from([("m".to_string(), motor())]),
        joints,
        links,
        sites: vec![SiteRecord {
            name: "tip".into(),
            parent: lengths.len() - 1,
            translation: [*lengths.last().unwrap(), 0.0, 0.0],
            rotation: [1.0, 0.0, 0.0, 0.0],
        }],
    };
    Chain::from_file(&file).unwrap()
}
