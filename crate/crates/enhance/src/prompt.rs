use std::io::Cursor;

use base64::Engine as _;
use forge_core::targets::{Target, TargetKind};
use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::guides::{render_guides, GuidePair};
use crate::Result;

/// Bumped whenever an instruction asset changes; part of the cache key.
pub const INSTRUCTION_VERSION: &str = "v1";

const BOXED_INSTRUCTIONS: &str = include_str!("../prompts/boxed-v1.txt");
const OVERLAY_INSTRUCTIONS: &str = include_str!("../prompts/overlay-v1.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Instruction {
    Boxed,
    Overlay,
}

impl Instruction {
    pub fn id(&self) -> String {
        match self {
            Instruction::Boxed => format!("boxed-{INSTRUCTION_VERSION}"),
            Instruction::Overlay => format!("overlay-{INSTRUCTION_VERSION}"),
        }
    }

    pub fn text(&self) -> &'static str {
        match self {
            Instruction::Boxed => BOXED_INSTRUCTIONS,
            Instruction::Overlay => OVERLAY_INSTRUCTIONS,
        }
    }
}

/// Everything sent for one target. Guide images are PNG-encoded so the
/// payload hashes and serializes deterministically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPayload {
    pub target_id: String,
    pub image_id: String,
    pub task1_inputs: Vec<String>,
    pub instruction: Instruction,
    #[serde(with = "b64_pair")]
    pub guides: [Vec<u8>; 2],
}

mod b64_pair {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine as _;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<u8>; 2], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|b| STANDARD.encode(b)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[Vec<u8>; 2], D::Error> {
        let v: Vec<String> = Vec::deserialize(d)?;
        let [a, b]: [String; 2] = v.try_into().map_err(|_| D::Error::custom("expected two images"))?;
        Ok([STANDARD.decode(a).map_err(D::Error::custom)?, STANDARD.decode(b).map_err(D::Error::custom)?])
    }
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

impl PromptPayload {
    pub fn build(tile: &RgbImage, image_id: &str, target: &Target, task1_inputs: Vec<String>) -> Result<Self> {
        let guides = render_guides(tile, target);
        let [a, b] = guides.images();
        let instruction = match (&guides, target.kind) {
            (GuidePair::Overlay { .. }, _) | (_, TargetKind::SemanticRegion) => Instruction::Overlay,
            _ => Instruction::Boxed,
        };
        Ok(Self {
            target_id: target.id.clone(),
            image_id: image_id.to_string(),
            task1_inputs,
            instruction,
            guides: [encode_png(a)?, encode_png(b)?],
        })
    }

    /// Chat messages in the OpenAI-compatible format: the instruction as the
    /// system turn, then the inputs as JSON text followed by both images.
    pub fn messages(&self) -> Value {
        let data_url = |png: &[u8]| format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(png));
        let inputs = json!({ "expressions": self.task1_inputs }).to_string();
        json!([
            { "role": "system", "content": self.instruction.text() },
            { "role": "user", "content": [
                { "type": "text", "text": inputs },
                { "type": "image_url", "image_url": { "url": data_url(&self.guides[0]) } },
                { "type": "image_url", "image_url": { "url": data_url(&self.guides[1]) } },
            ]},
        ])
    }

    pub fn request_body(&self, model: &str) -> Value {
        json!({
            "model": model,
            "messages": self.messages(),
            "response_format": { "type": "json_object" },
            "temperature": 0,
        })
    }

    /// Content hash of (payload, instruction version, model).
    pub fn cache_key(&self, model: &str) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("payload serializes"));
        h.update([0]);
        h.update(self.instruction.id().as_bytes());
        h.update([0]);
        h.update(model.as_bytes());
        hex::encode(h.finalize())
    }
}

/// Reads the input expressions back out of a request body.
pub fn inputs_from_request(body: &Value) -> Option<Vec<String>> {
    let text = body["messages"].as_array()?.iter().find(|m| m["role"] == "user")?["content"]
        .as_array()?
        .iter()
        .find(|c| c["type"] == "text")?["text"]
        .as_str()?
        .to_string();
    let v: Value = serde_json::from_str(&text).ok()?;
    v["expressions"].as_array()?.iter().map(|e| e.as_str().map(String::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use forge_core::Mask;

    fn payload(inputs: &[&str]) -> PromptPayload {
        let mask = Mask::rect(48, 48, 10, 10, 8, 8);
        let t = Target {
            id: "img-t000".into(),
            kind: TargetKind::Instance,
            category: "plane".into(),
            bbox: mask.bbox().unwrap(),
            mask,
            members: vec![],
        };
        PromptPayload::build(&RgbImage::new(48, 48), "img", &t, inputs.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn request_carries_inputs_and_two_images() {
        let p = payload(&["the plane in the top-left"]);
        let body = p.request_body("m");
        assert_eq!(inputs_from_request(&body).unwrap(), vec!["the plane in the top-left"]);
        let parts = body["messages"][1]["content"].as_array().unwrap();
        assert_eq!(parts.iter().filter(|c| c["type"] == "image_url").count(), 2);
        assert!(parts[1]["image_url"]["url"].as_str().unwrap().starts_with("data:image/png;base64,"));
    }

    #[test]
    fn cache_key_depends_on_payload_and_model() {
        let a = payload(&["x"]);
        assert_eq!(a.cache_key("m"), payload(&["x"]).cache_key("m"));
        assert_ne!(a.cache_key("m"), a.cache_key("n"));
        assert_ne!(a.cache_key("m"), payload(&["y"]).cache_key("m"));
    }

    #[test]
    fn payload_json_round_trips() {
        let p = payload(&["x", "y"]);
        let back: PromptPayload = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
