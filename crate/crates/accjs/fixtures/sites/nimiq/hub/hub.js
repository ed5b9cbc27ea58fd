/* stand-in for https://hub.nimiq.com/js/hub.js */
(function () { self.loaded = (self.loaded || []).concat("https://hub.nimiq.com/js/hub.js"); })();
