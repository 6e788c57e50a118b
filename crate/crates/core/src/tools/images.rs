use std::collections::BTreeMap;

use super::ToolError;
use crate::media::{ImagePayload, NamedImage};

pub const ORIGINAL_IMAGE: &str = "original_image";

/// Names the images of one rollout. Names are never reassigned.
#[derive(Debug, Clone, Default)]
pub struct ImageRegistry {
    images: BTreeMap<String, ImagePayload>,
    order: Vec<String>,
    next_tool_image: u32,
}

/// Resolved `image_url` argument.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageRef {
    Registered(NamedImage),
    Url(String),
}

impl ImageRegistry {
    /// Registry seeded with the task's input images. Only the first one is
    /// addressable, as `original_image`.
    pub fn with_originals(originals: &[ImagePayload]) -> Self {
        let mut reg = Self { next_tool_image: 1, ..Self::default() };
        if let Some(first) = originals.first() {
            reg.insert(ORIGINAL_IMAGE.to_string(), first.clone());
        }
        reg
    }

    fn insert(&mut self, name: String, payload: ImagePayload) {
        self.order.push(name.clone());
        self.images.insert(name, payload);
    }

    /// Registers a tool-produced image as the next `tool_image_N`.
    pub fn register_tool_image(&mut self, payload: ImagePayload) -> String {
        if self.next_tool_image == 0 {
            self.next_tool_image = 1;
        }
        let name = format!("tool_image_{}", self.next_tool_image);
        self.next_tool_image += 1;
        self.insert(name.clone(), payload);
        name
    }

    pub fn get(&self, name: &str) -> Result<&ImagePayload, ToolError> {
        self.images
            .get(name)
            .ok_or_else(|| ToolError::UnknownImageRef(name.to_string()))
    }

    /// Exact-name lookup; `http(s)://` references pass through untouched.
    pub fn resolve(&self, reference: &str) -> Result<ImageRef, ToolError> {
        let reference = reference.trim();
        if reference.starts_with("http://") || reference.starts_with("https://") {
            return Ok(ImageRef::Url(reference.to_string()));
        }
        let payload = self.get(reference)?;
        Ok(ImageRef::Registered(NamedImage { name: reference.to_string(), payload: payload.clone() }))
    }

    /// All registered images in registration order.
    pub fn named(&self) -> Vec<NamedImage> {
        self.order
            .iter()
            .map(|n| NamedImage { name: n.clone(), payload: self.images[n].clone() })
            .collect()
    }

    pub fn tool_image_count(&self) -> u32 {
        self.next_tool_image.saturating_sub(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naming_is_dense_and_lookup_exact() {
        let mut reg = ImageRegistry::with_originals(&[ImagePayload::png(vec![0]), ImagePayload::png(vec![9])]);
        assert_eq!(reg.get(ORIGINAL_IMAGE).unwrap().data, vec![0]);
        assert_eq!(reg.register_tool_image(ImagePayload::png(vec![1])), "tool_image_1");
        assert_eq!(reg.register_tool_image(ImagePayload::png(vec![2])), "tool_image_2");
        assert_eq!(reg.get("tool_image_1").unwrap().data, vec![1]);
        assert!(matches!(reg.resolve("tool_image_9"), Err(ToolError::UnknownImageRef(n)) if n == "tool_image_9"));
        assert_eq!(reg.resolve("https://x/y.png").unwrap(), ImageRef::Url("https://x/y.png".into()));
        assert_eq!(reg.tool_image_count(), 2);
    }
}
